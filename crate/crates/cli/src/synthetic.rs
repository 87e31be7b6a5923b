//! Generators for the bundled example datasets.

use didweak_core::rng;
use didweak_core::{Column, Dataset};
use rand::Rng;
use rand_distr::StandardNormal;

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Region-by-age panel: 40 regions, ages 2 to 24, three people per cell.
///
/// `school` carries a kink at age 12 in the intensity interaction;
/// `lwage` depends on `school` with an error correlated with the
/// schooling error; `w` is an exogenous sampling weight.
pub fn panel(seed: u64) -> Dataset {
    let mut g = rng::stream(seed, 0);
    let regions = 40;
    let ages: Vec<i64> = (2..=24).collect();
    let intensity: Vec<f64> = (0..regions).map(|_| round6(g.random_range(0.0..2.0))).collect();
    let alpha: Vec<f64> = (0..regions).map(|_| g.sample::<f64, _>(StandardNormal)).collect();
    let alpha_w: Vec<f64> = (0..regions).map(|_| 0.3 * g.sample::<f64, _>(StandardNormal)).collect();
    let gamma: Vec<f64> = ages.iter().map(|_| g.sample::<f64, _>(StandardNormal)).collect();
    let (mut region, mut age, mut d, mut w, mut school, mut lwage) = (vec![], vec![], vec![], vec![], vec![], vec![]);
    for j in 0..regions {
        for (k, &a) in ages.iter().enumerate() {
            for _ in 0..3 {
                let e: f64 = g.sample(StandardNormal);
                let v: f64 = g.sample(StandardNormal);
                let wt: f64 = g.sample(StandardNormal);
                let s = 8.0 + alpha[j] + gamma[k] + 0.12 * intensity[j] * (12 - a).max(0) as f64 + e;
                region.push(format!("r{j:02}"));
                age.push(a as f64);
                d.push(intensity[j]);
                w.push(round6((0.3 * wt).exp()));
                school.push(round6(s));
                lwage.push(round6(1.0 + alpha_w[j] + 0.02 * a as f64 + 0.08 * s + 0.3 * e + 0.5 * v));
            }
        }
    }
    let mut data = Dataset::new(region.len());
    data.push("region", Column::Categorical(didweak_core::data::Categorical::from_labels(&region))).unwrap();
    for (name, col) in [("age", age), ("intensity", d), ("w", w), ("school", school), ("lwage", lwage)] {
        data.push(name, Column::Numeric(col)).unwrap();
    }
    data
}

/// Two groups by two periods, 200 people per cell in 40 clusters nested in
/// the groups. The treated post cell has an effect rising across the
/// distribution; `x` shifts the outcome in every cell.
pub fn cells(seed: u64) -> Dataset {
    let mut g = rng::stream(seed, 1);
    let (mut treat, mut post, mut cluster, mut x, mut y) = (vec![], vec![], vec![], vec![], vec![]);
    for d in 0..2u32 {
        for t in 0..2u32 {
            for i in 0..200u32 {
                let u: f64 = g.sample(StandardNormal);
                let xi: f64 = g.sample(StandardNormal);
                let effect = if d == 1 && t == 1 { 0.3 + 0.2 * u } else { 0.0 };
                treat.push(d as f64);
                post.push(t as f64);
                cluster.push(format!("c{:02}", d * 20 + i % 20));
                x.push(round6(xi));
                y.push(round6(u + 0.5 * xi + 0.5 * t as f64 + 0.2 * d as f64 + effect));
            }
        }
    }
    let mut data = Dataset::new(treat.len());
    data.push("cluster", Column::Categorical(didweak_core::data::Categorical::from_labels(&cluster))).unwrap();
    for (name, col) in [("treat", treat), ("post", post), ("x", x), ("y", y)] {
        data.push(name, Column::Numeric(col)).unwrap();
    }
    data
}
