//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use limitrd::fe::{ClusterAssignment, DesignMatrix, FeDimension, FixedEffectGroups};
use limitrd::synth::{Baselines, DistanceLaw, PlantedEffects, SynthConfig, SynthEvent};
use limitrd::WeightVector;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Regression problem with two crossed fixed-effect dimensions.
pub struct FeInstance {
    pub columns: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub w: Vec<f64>,
}

impl FeInstance {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn design(&self) -> DesignMatrix {
        let names = (0..self.columns.len()).map(|j| format!("x{j}")).collect();
        DesignMatrix::from_columns(names, self.columns.clone()).unwrap()
    }

    pub fn groups(&self) -> FixedEffectGroups {
        FixedEffectGroups::new(vec![
            FeDimension::from_keys("a", self.a.iter().copied()),
            FeDimension::from_keys("b", self.b.iter().copied()),
        ])
        .unwrap()
    }

    pub fn weights(&self) -> WeightVector {
        WeightVector::new(self.w.clone()).unwrap()
    }

    pub fn clusters(&self) -> ClusterAssignment {
        ClusterAssignment::from_keys(("a", "b"), self.a.iter().copied(), self.b.iter().copied()).unwrap()
    }
}

/// Random instance: regressors correlated with the group effects, Gaussian
/// kernel weights of normal arguments.
pub fn fe_instance(seed: u64, max_rows: usize) -> FeInstance {
    let mut r = rng(seed);
    let n = r.random_range(40..=max_rows);
    let ga = r.random_range(2..=12usize);
    let gb = r.random_range(2..=9usize);
    let k = r.random_range(1..=4usize);
    let a: Vec<u32> = (0..n).map(|_| r.random_range(0..ga) as u32).collect();
    let b: Vec<u32> = (0..n).map(|_| r.random_range(0..gb) as u32).collect();
    let ea: Vec<f64> = (0..ga).map(|_| normal(&mut r)).collect();
    let eb: Vec<f64> = (0..gb).map(|_| normal(&mut r)).collect();
    let columns: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..n)
                .map(|i| normal(&mut r) + 0.5 * ea[a[i] as usize] - 0.3 * eb[b[i] as usize])
                .collect()
        })
        .collect();
    let beta: Vec<f64> = (0..k).map(|_| normal(&mut r)).collect();
    let y = (0..n)
        .map(|i| {
            let xb: f64 = (0..k).map(|j| beta[j] * columns[j][i]).sum();
            xb + ea[a[i] as usize] + eb[b[i] as usize] + normal(&mut r)
        })
        .collect();
    let w = (0..n)
        .map(|_| {
            let u = normal(&mut r);
            (-0.5 * u * u).exp()
        })
        .collect();
    FeInstance { columns, y, a, b, w }
}

fn dummies(keys: &[u32], skip_first: bool) -> Vec<Vec<f64>> {
    let mut levels: Vec<u32> = keys.to_vec();
    levels.sort_unstable();
    levels.dedup();
    levels
        .into_iter()
        .skip(skip_first as usize)
        .map(|g| keys.iter().map(|&k| (k == g) as u8 as f64).collect())
        .collect()
}

/// Weighted least squares with explicit group dummies, solved by SVD on the
/// square-root-weighted system. Returns the coefficients of the regressors.
pub fn dense_dummy_fit(inst: &FeInstance) -> Vec<f64> {
    let n = inst.n();
    let mut cols = inst.columns.clone();
    cols.extend(dummies(&inst.a, false));
    cols.extend(dummies(&inst.b, true));
    let p = cols.len();
    let x = DMatrix::from_fn(n, p, |i, j| cols[j][i] * inst.w[i].sqrt());
    let y = DVector::from_fn(n, |i, _| inst.y[i] * inst.w[i].sqrt());
    let beta = x.svd(true, true).solve(&y, 1e-12).unwrap();
    beta.iter().take(inst.columns.len()).copied().collect()
}

/// Normal-equations solution `(X'WX)^{-1} X'Wy`.
pub fn normal_equations(columns: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let n = y.len();
    let k = columns.len();
    let x = DMatrix::from_fn(n, k, |i, j| columns[j][i]);
    let wd = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    let xtwx = x.transpose() * &wd * &x;
    let xtwy = x.transpose() * &wd * DVector::from_column_slice(y);
    let beta = xtwx.lu().solve(&xtwy).unwrap();
    beta.iter().copied().collect()
}

/// Two-way clustered covariance by explicit pairwise summation:
/// `V_c = B (sum_{i,j: c_i = c_j} s_i s_j') B` with `s_i = w_i x_i e_i`, and
/// `V = V_a + V_b - V_ab`.
#[allow(clippy::needless_range_loop)]
pub fn brute_force_twoway(
    columns: &[Vec<f64>],
    e: &[f64],
    w: &[f64],
    ca: &[u32],
    cb: &[u32],
) -> DMatrix<f64> {
    let n = e.len();
    let k = columns.len();
    let x = DMatrix::from_fn(n, k, |i, j| columns[j][i]);
    let mut xtwx = DMatrix::zeros(k, k);
    for i in 0..n {
        let xi = x.row(i).transpose();
        xtwx += w[i] * &xi * xi.transpose();
    }
    let bread = xtwx.try_inverse().unwrap();
    let score = |i: usize| x.row(i).transpose() * (w[i] * e[i]);
    let meat = |same: &dyn Fn(usize, usize) -> bool| {
        let mut m = DMatrix::zeros(k, k);
        for i in 0..n {
            for j in 0..n {
                if same(i, j) {
                    m += score(i) * score(j).transpose();
                }
            }
        }
        &bread * m * &bread
    };
    let va = meat(&|i, j| ca[i] == ca[j]);
    let vb = meat(&|i, j| cb[i] == cb[j]);
    let vab = meat(&|i, j| ca[i] == ca[j] && cb[i] == cb[j]);
    va + vb - vab
}

/// Heteroskedasticity-robust covariance `B (sum_i s_i s_i') B`.
pub fn hc0(columns: &[Vec<f64>], e: &[f64], w: &[f64]) -> DMatrix<f64> {
    let n = e.len();
    let k = columns.len();
    let x = DMatrix::from_fn(n, k, |i, j| columns[j][i]);
    let mut xtwx = DMatrix::zeros(k, k);
    let mut m = DMatrix::zeros(k, k);
    for i in 0..n {
        let xi = x.row(i).transpose();
        xtwx += w[i] * &xi * xi.transpose();
        let s = &xi * (w[i] * e[i]);
        m += &s * s.transpose();
    }
    let bread = xtwx.try_inverse().unwrap();
    &bread * m * &bread
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &DMatrix<f64>) -> f64 {
    let mut d: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            d = d.max((v - b[(i, j)]).abs());
        }
    }
    d
}

/// Ten events two years apart, each with half its units treated.
pub fn events(n: usize) -> Vec<SynthEvent> {
    (0..n)
        .map(|k| SynthEvent {
            event_id: format!("ev{k:02}"),
            year: 1995 + 2 * k as i32,
            treated_share: 0.5,
            label: String::new(),
        })
        .collect()
}

pub fn approval_effects(tau: &[(i32, f64)]) -> PlantedEffects {
    PlantedEffects {
        tau: tau.iter().copied().collect::<BTreeMap<_, _>>(),
        ..PlantedEffects::default()
    }
}

/// 200 units x 500 records with amounts within 5% of the limit.
pub fn event_study_config(seed: u64, tau: &[(i32, f64)]) -> SynthConfig {
    let mut c = small_config(seed, 200, 500);
    c.distance_law = DistanceLaw::Uniform { max: 0.05 };
    c.planted.approved = approval_effects(tau);
    c
}

/// 100 units x 1000 records with amounts within 1% of the limit, a balanced
/// jumbo share and a low, nearly homogeneous approval rate.
pub fn rd_config(seed: u64, tau: &[(i32, f64)]) -> SynthConfig {
    let mut c = small_config(seed, 100, 1000);
    c.distance_law = DistanceLaw::Uniform { max: 0.01 };
    c.jumbo_share_target = 0.5;
    c.fe_scale = 0.003;
    c.baselines = Baselines {
        approved: 0.01,
        ..Baselines::default()
    };
    c.planted.approved = approval_effects(tau);
    c
}

pub fn small_config(seed: u64, n_units: usize, records_per_unit: usize) -> SynthConfig {
    SynthConfig {
        n_units,
        records_per_unit,
        years: (1990, 2020),
        events: events(10),
        jumbo_share_target: 0.28,
        distance_law: DistanceLaw::default(),
        limit_schedule: Default::default(),
        planted: Default::default(),
        baselines: Baselines::default(),
        fe_scale: 0.05,
        window: 4,
        reference_time: -1,
        seed,
    }
}

/// Counts of each key, for comparing categorical outputs.
pub fn tally<K: std::hash::Hash + Eq, I: IntoIterator<Item = K>>(keys: I) -> HashMap<K, usize> {
    let mut m = HashMap::new();
    for k in keys {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

use limitrd::synth::{AnomalySpec, DummyClass, DummyCorruption, WrongYearRule};
use limitrd::{CalendarEntry, EventCalendar, EventPanel, LoanRecord};

pub fn record(unit: &str, year: i32, event: Option<(&str, i32)>, treated: bool, reported: u32) -> LoanRecord {
    LoanRecord {
        true_amount: None,
        reported_amount: reported,
        limit: 424.1,
        unit_id: unit.to_string(),
        year,
        event_id: event.map(|e| e.0.to_string()),
        treated,
        time_rel: event.map(|e| e.1),
        approved: true,
        originated: false,
        securitized: None,
        time_dummies: None,
    }
}

pub fn calendar(entries: &[(&str, i32)]) -> EventCalendar {
    EventCalendar::new(
        entries
            .iter()
            .map(|(id, y)| CalendarEntry {
                event_id: id.to_string(),
                canonical_year: *y,
                label: String::new(),
            })
            .collect(),
    )
    .unwrap()
}

/// Treated dummy-sum counts at one tenth of the published table.
pub const HISTOGRAM_TENTH: [(usize, usize); 4] = [(0, 9323), (1, 3588), (2, 605), (3, 16)];
pub const HISTOGRAM_DROPPED: usize = 1000;

/// Base panel of 13,532 treated records (8,323 at the reference time, the
/// rest spread over the other relative times in `[-4, 4]`) plus untreated
/// controls, and the injection that turns it into [`HISTOGRAM_TENTH`].
pub fn histogram_fixture() -> (EventPanel, AnomalySpec) {
    let reference = HISTOGRAM_TENTH[0].1 - HISTOGRAM_DROPPED;
    let treated: usize = HISTOGRAM_TENTH.iter().map(|(_, n)| n).sum();
    let times: Vec<i32> = (-4..=4).filter(|&t| t != -1).collect();
    let mut records = Vec::new();
    for i in 0..treated {
        let t = if i < reference { -1 } else { times[i % times.len()] };
        let unit = format!("t{:03}", i % 400);
        records.push(record(
            &unit,
            2005 + t,
            Some(("ev", t)),
            true,
            400 + (i % 50) as u32,
        ));
    }
    for i in 0..2000 {
        let t = (i % 9) - 4;
        records.push(record(
            &format!("c{:03}", i % 100),
            2005 + t,
            Some(("ev", t)),
            false,
            400,
        ));
    }
    let panel = EventPanel::new(records, calendar(&[("ev", 2005)])).unwrap();
    let spec = AnomalySpec {
        dummy_corruptions: vec![
            DummyCorruption {
                class: DummyClass::DropAll,
                count: HISTOGRAM_DROPPED,
            },
            DummyCorruption {
                class: DummyClass::DuplicatePair,
                count: HISTOGRAM_TENTH[2].1,
            },
            DummyCorruption {
                class: DummyClass::Triple,
                count: HISTOGRAM_TENTH[3].1,
            },
        ],
        seed: 11,
        ..AnomalySpec::default()
    };
    (panel, spec)
}

/// Two storms over 2001-2009; 29.5% of the 2005 storm's 2,000 records are
/// recoded to imply 2004, 2008 or 2012 as the treatment year.
pub fn katrina_fixture() -> (SynthConfig, AnomalySpec) {
    let mut c = small_config(21, 40, 100);
    c.years = (2001, 2009);
    c.events = vec![
        SynthEvent {
            event_id: "katrina".into(),
            year: 2005,
            treated_share: 0.5,
            label: "Katrina (2005)".into(),
        },
        SynthEvent {
            event_id: "ivan".into(),
            year: 2004,
            treated_share: 0.5,
            label: "Ivan (2004)".into(),
        },
    ];
    let rule = |wrong_year, share| WrongYearRule {
        event_id: "katrina".into(),
        wrong_year,
        share,
        band: None,
    };
    let spec = AnomalySpec {
        wrong_year_rules: vec![rule(2004, 0.12), rule(2008, 0.1), rule(2012, 0.075)],
        seed: 3,
        ..AnomalySpec::default()
    };
    (c, spec)
}
