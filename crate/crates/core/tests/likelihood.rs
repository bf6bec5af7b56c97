use gdilm::history::{EpidemicHistory, Framework};
use gdilm::likelihood::{log_likelihood, Component, LikelihoodEngine, LikelihoodError};
use gdilm::model::{ModelConfig, ModelParams};
use gdilm::population::{Area, AreaGraph, Individual, Population};
use gdilm::rng::substream;
use gdilm::simulate::simulate_epidemic;
use proptest::prelude::*;
use rand::Rng;

fn cfg(restricted: bool, framework: Framework) -> ModelConfig {
    ModelConfig {
        restricted,
        framework,
        include_alpha: true,
        distance_floor: 0.01,
    }
}

fn pair_pop() -> Population<f64> {
    let inds = vec![
        Individual {
            id: 1,
            x: 0.0,
            y: 0.0,
            area: 0,
            covariates: vec![],
        },
        Individual {
            id: 2,
            x: 1.0,
            y: 0.0,
            area: 0,
            covariates: vec![],
        },
    ];
    Population::new(inds, vec![Area::default()], AreaGraph::islands(1)).unwrap()
}

#[test]
fn no_infectious_no_information() {
    let pop = pair_pop();
    let theta = ModelParams::zeros(&pop);
    let h = EpidemicHistory::empty(2, 10);
    assert_eq!(
        log_likelihood(&h, &pop, &theta, &cfg(false, Framework::Si)).unwrap(),
        0.0
    );
}

#[test]
fn single_event_and_escape() {
    let pop = pair_pop();
    let theta = ModelParams::zeros(&pop);
    let c = cfg(false, Framework::Si);
    let infected =
        EpidemicHistory::from_infections(2, vec![Some(1), Some(2)], Framework::Si).unwrap();
    let v = log_likelihood(&infected, &pop, &theta, &c).unwrap();
    assert!((v - (-0.4586751)).abs() < 1e-7);
    let escaped = EpidemicHistory::from_infections(2, vec![Some(1), None], Framework::Si).unwrap();
    let v = log_likelihood(&escaped, &pop, &theta, &c).unwrap();
    assert!((v + 1.0).abs() < 1e-15);
}

#[test]
fn impossible_data_is_negative_infinity() {
    // the second infection has no infectious source in range under the restricted model
    let inds = vec![
        Individual {
            id: 1,
            x: 0.0,
            y: 0.0,
            area: 0,
            covariates: vec![],
        },
        Individual {
            id: 2,
            x: 1.0,
            y: 0.0,
            area: 1,
            covariates: vec![],
        },
    ];
    let pop = Population::new(inds, vec![Area::default(); 2], AreaGraph::islands(2)).unwrap();
    let theta = ModelParams::zeros(&pop);
    let h = EpidemicHistory::from_infections(2, vec![Some(1), Some(2)], Framework::Si).unwrap();
    let c = cfg(true, Framework::Si);
    assert_eq!(
        log_likelihood(&h, &pop, &theta, &c).unwrap(),
        f64::NEG_INFINITY
    );
    let engine = LikelihoodEngine::new(&pop, &h, &theta, &c).unwrap();
    assert_eq!(engine.log_likelihood(), f64::NEG_INFINITY);
    // a sparks term makes it possible again
    let mut sparks = theta.clone();
    sparks.epsilon = 0.1;
    let v = log_likelihood(&h, &pop, &sparks, &c).unwrap();
    assert!((v - (1.0 - (-0.1f64).exp()).ln()).abs() < 1e-14);
}

#[test]
fn framework_mismatch_rejected() {
    let pop = pair_pop();
    let theta = ModelParams::zeros(&pop);
    let h = EpidemicHistory::from_infections(3, vec![Some(1), None], Framework::Sir { gamma: 1 })
        .unwrap();
    assert!(matches!(
        log_likelihood(&h, &pop, &theta, &cfg(false, Framework::Si)),
        Err(LikelihoodError::History(_))
    ));
}

/// 3 individuals in 2 adjacent areas, individual 0 infectious at t = 1.
fn toy() -> Population<f64> {
    let inds = vec![
        Individual {
            id: 1,
            x: 0.0,
            y: 0.0,
            area: 0,
            covariates: vec![0.5],
        },
        Individual {
            id: 2,
            x: 0.8,
            y: 0.3,
            area: 0,
            covariates: vec![-0.2],
        },
        Individual {
            id: 3,
            x: 1.7,
            y: -0.4,
            area: 1,
            covariates: vec![1.1],
        },
    ];
    Population::new(inds, vec![Area::default(); 2], AreaGraph::path(2)).unwrap()
}

fn toy_theta(pop: &Population<f64>) -> ModelParams<f64> {
    let mut t = ModelParams::zeros(pop);
    t.alpha = 0.3;
    t.alpha1 = vec![0.4];
    t.delta = 2.5;
    t.phi = vec![0.2, -0.35];
    t
}

/// All histories with individual 0 infected at t = 1 and the others infected
/// at some step in 2..=T or never.
fn enumerate_paths(horizon: usize, framework: Framework) -> Vec<EpidemicHistory> {
    let choices: Vec<Option<usize>> = std::iter::once(None)
        .chain((2..=horizon).map(Some))
        .collect();
    let mut out = Vec::new();
    for &a in &choices {
        for &b in &choices {
            out.push(
                EpidemicHistory::from_infections(horizon, vec![Some(1), a, b], framework).unwrap(),
            );
        }
    }
    out
}

#[test]
fn likelihood_normalises_over_all_paths() {
    let pop = toy();
    let theta = toy_theta(&pop);
    for (framework, restricted) in [
        (Framework::Sir { gamma: 1 }, true),
        (Framework::Sir { gamma: 2 }, false),
        (Framework::Si, false),
    ] {
        for horizon in [2, 3, 4] {
            let c = cfg(restricted, framework);
            let total: f64 = enumerate_paths(horizon, framework)
                .iter()
                .map(|h| log_likelihood(h, &pop, &theta, &c).unwrap().exp())
                .sum();
            assert!(
                (total - 1.0).abs() < 1e-10,
                "{framework:?} T={horizon}: {total}"
            );
        }
    }
}

#[test]
fn engine_matches_direct_evaluation_on_every_path() {
    let pop = toy();
    let theta = toy_theta(&pop);
    let framework = Framework::Sir { gamma: 2 };
    for restricted in [true, false] {
        let c = cfg(restricted, framework);
        for h in enumerate_paths(5, framework) {
            let direct = log_likelihood(&h, &pop, &theta, &c).unwrap();
            let engine = LikelihoodEngine::new(&pop, &h, &theta, &c)
                .unwrap()
                .log_likelihood();
            assert!(
                direct == engine || (direct - engine).abs() <= 1e-12 * direct.abs().max(1.0),
                "{direct} vs {engine}"
            );
        }
    }
}

fn random_population(seed: u64, n: usize, n_areas: usize) -> Population<f64> {
    let mut rng = substream(seed, "test/pop");
    let inds = (0..n)
        .map(|i| Individual {
            id: (i * 7 + 3) as u64,
            x: rng.random_range(0.0..6.0),
            y: rng.random_range(0.0..3.0),
            area: rng.random_range(0..n_areas),
            covariates: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        })
        .collect();
    let areas = (0..n_areas)
        .map(|_| Area {
            covariates: vec![rng.random_range(-1.0..1.0)],
            time_covariates: (0..12).map(|_| vec![rng.random_range(-1.0..1.0)]).collect(),
            time_start: 0,
        })
        .collect();
    let edges: Vec<(usize, usize)> = (1..n_areas)
        .map(|k| (k - 1, k))
        .chain([(0, n_areas - 1)])
        .collect();
    Population::new(inds, areas, AreaGraph::from_edges(n_areas, &edges).unwrap()).unwrap()
}

fn random_theta(pop: &Population<f64>, seed: u64) -> ModelParams<f64> {
    let mut rng = substream(seed, "test/theta");
    let mut t = ModelParams::zeros(pop);
    t.alpha = rng.random_range(0.0..0.5);
    t.alpha1 = vec![rng.random_range(0.0..0.5), rng.random_range(0.0..0.5)];
    t.alpha2 = vec![rng.random_range(0.0..0.3)];
    t.alpha3 = vec![rng.random_range(0.0..0.3)];
    t.rho = 1;
    t.delta = rng.random_range(1.0..4.0);
    t.phi = (0..pop.n_areas())
        .map(|_| rng.random_range(-0.5..0.5))
        .collect();
    t.lambda = 0.5;
    t
}

fn simulated(
    pop: &Population<f64>,
    theta: &ModelParams<f64>,
    c: &ModelConfig,
    seed: u64,
) -> EpidemicHistory {
    let mut rng = substream(seed, "test/sim");
    simulate_epidemic(pop, theta, c, 10, &[0, 5], &mut rng).unwrap()
}

#[test]
fn delta_path_matches_full_recomputation() {
    let pop = random_population(1, 40, 4);
    let theta = random_theta(&pop, 2);
    for restricted in [true, false] {
        let c = cfg(restricted, Framework::Sir { gamma: 3 });
        let h = simulated(&pop, &theta, &c, 3);
        let mut engine = LikelihoodEngine::new(&pop, &h, &theta, &c).unwrap();
        let mut current = theta.clone();
        let steps: Vec<Component> = vec![
            Component::Phi(1),
            Component::Delta,
            Component::Alpha,
            Component::Alpha1(1),
            Component::Alpha2(0),
            Component::Alpha3(0),
            Component::Phi(3),
            Component::Lambda,
            Component::None,
        ];
        for (n, comp) in steps.into_iter().enumerate() {
            let bump = 0.05 * (n as f64 + 1.0);
            match comp {
                Component::Phi(k) => current.phi[k] += bump,
                Component::Delta => current.delta += bump,
                Component::Alpha => current.alpha += bump,
                Component::Alpha1(c) => current.alpha1[c] += bump,
                Component::Alpha2(c) => current.alpha2[c] += bump,
                Component::Alpha3(c) => current.alpha3[c] += bump,
                Component::Lambda => current.lambda = 0.3,
                _ => {}
            }
            let before = engine.log_likelihood();
            let incremental = engine.propose(&current, comp).unwrap().log_likelihood();
            let full = engine.propose_full(&current).unwrap().log_likelihood();
            // same term functions on both paths: bit-identical
            assert_eq!(incremental, full, "{comp:?}");
            let direct = log_likelihood(&h, &pop, &current, &c).unwrap();
            assert!(
                (incremental - direct).abs() < 1e-9 * direct.abs().max(1.0),
                "{comp:?}"
            );
            let got = engine.log_likelihood_delta(&current, comp).unwrap();
            assert_eq!(got, incremental);
            if matches!(comp, Component::None | Component::Lambda) {
                assert_eq!(got, before);
            }
        }
    }
}

#[test]
fn cache_mismatch_detected() {
    let pop = random_population(4, 20, 3);
    let theta = random_theta(&pop, 5);
    let c = cfg(true, Framework::Sir { gamma: 2 });
    let h = simulated(&pop, &theta, &c, 6);
    let engine = LikelihoodEngine::new(&pop, &h, &theta, &c).unwrap();
    let mut other = theta.clone();
    other.phi[0] += 0.1;
    assert!(matches!(
        engine.propose(&other, Component::Phi(1)),
        Err(LikelihoodError::CacheMismatch("phi", _))
    ));
    other.phi[0] = theta.phi[0];
    other.delta += 1.0;
    assert!(matches!(
        engine.propose(&other, Component::Alpha),
        Err(LikelihoodError::CacheMismatch("delta", _))
    ));
    assert!(matches!(
        engine.propose(&theta, Component::Phi(9)),
        Err(LikelihoodError::ComponentOutOfRange(_))
    ));
}

#[test]
fn invariant_to_individual_order_and_area_labels() {
    let pop = random_population(7, 30, 4);
    let theta = random_theta(&pop, 8);
    let c = cfg(true, Framework::Sir { gamma: 3 });
    let h = simulated(&pop, &theta, &c, 9);
    let base = log_likelihood(&h, &pop, &theta, &c).unwrap();

    // reverse the id order; canonical order flips, so permute the history with it
    let n = pop.len();
    let inds: Vec<Individual<f64>> = pop
        .individuals()
        .iter()
        .enumerate()
        .map(|(i, ind)| Individual {
            id: (n - i) as u64,
            ..ind.clone()
        })
        .collect();
    let relabeled = Population::new(inds, pop.areas().to_vec(), pop.graph().clone()).unwrap();
    let perm: Vec<usize> = (0..n).rev().collect();
    let h2 = h.permuted(&perm);
    let v = log_likelihood(&h2, &relabeled, &theta, &c).unwrap();
    assert!((v - base).abs() < 1e-10 * base.abs().max(1.0));

    // relabel areas k -> 3 - k with the matching phi permutation
    let map = |k: usize| 3 - k;
    let inds: Vec<Individual<f64>> = pop
        .individuals()
        .iter()
        .map(|ind| Individual {
            area: map(ind.area),
            ..ind.clone()
        })
        .collect();
    let mut areas = pop.areas().to_vec();
    areas.reverse();
    let edges: Vec<(usize, usize)> = pop.graph().edges().map(|(a, b)| (map(a), map(b))).collect();
    let pop3 = Population::new(inds, areas, AreaGraph::from_edges(4, &edges).unwrap()).unwrap();
    let mut theta3 = theta.clone();
    theta3.phi.reverse();
    let v = log_likelihood(&h, &pop3, &theta3, &c).unwrap();
    assert!((v - base).abs() < 1e-10 * base.abs().max(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn alpha_raises_events_and_lowers_escapes(bump in 0.01f64..1.0) {
        let pop = toy();
        let theta = toy_theta(&pop);
        let mut higher = theta.clone();
        higher.alpha += bump;
        let c = cfg(false, Framework::Si);
        let infected = EpidemicHistory::from_infections(2, vec![Some(1), Some(2), None], Framework::Si).unwrap();
        // individual 1 infected: event term up; individual 2 escaped: term down
        let single = |h: &EpidemicHistory, t: &ModelParams<f64>, who: usize| {
            let rate = gdilm::model::infectivity_rate(&pop, who, 1, h, t, &c).unwrap();
            if h.infection_time(who) == Some(2) {
                gdilm::model::log_probability_from_rate(rate, t.epsilon)
            } else {
                -rate
            }
        };
        prop_assert!(single(&infected, &higher, 1) > single(&infected, &theta, 1));
        prop_assert!(single(&infected, &higher, 2) < single(&infected, &theta, 2));
    }

    #[test]
    fn random_histories_agree_between_paths(seed in 0u64..10_000) {
        let pop = random_population(seed, 25, 3);
        let theta = random_theta(&pop, seed + 1);
        let c = cfg(seed % 2 == 0, Framework::Sir { gamma: 1 + (seed % 3) as usize });
        let h = simulated(&pop, &theta, &c, seed + 2);
        let direct = log_likelihood(&h, &pop, &theta, &c).unwrap();
        let engine = LikelihoodEngine::new(&pop, &h, &theta, &c).unwrap().log_likelihood();
        prop_assert!((direct - engine).abs() <= 1e-10 * direct.abs().max(1.0));
    }
}
