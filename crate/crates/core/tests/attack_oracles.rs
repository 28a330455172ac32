use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use topoleak::adversary::honest_partition;
use topoleak::attack::{
    gradient_inversion, local_gradient, membership_attack_eval, membership_score, roc_auc, synthetic_image,
    train_decentralized, Architecture, AttackMetrics, GradientBundle, InversionConfig, LabelKnowledge, LocalDataset,
    MembershipCandidate, RoundPolicy, Sample, Target, ToyModel,
};
use topoleak::consensus::{metropolis_weights, ConsensusOptions};
use topoleak::graph::{Graph, Topology};
use topoleak::seed::rng_from_seed;

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn linear_single_sample_inversion_recovers_direction() {
    let mut rng = rng_from_seed(17);
    for trial in 0..5u64 {
        let arch = Architecture::LinearRegression { inputs: 12 };
        let model = ToyModel::init(arch, 0.1, 100 + trial);
        let x: Vec<f64> = (0..12).map(|_| rng.random_range(0.05..0.95)).collect();
        let y = 3.0;
        let target = local_gradient(
            &model,
            &[Sample {
                x: x.clone(),
                target: Target::Value(y),
            }],
        )
        .unwrap();
        let cfg = InversionConfig {
            seed: trial,
            ..InversionConfig::default()
        };
        let out = gradient_inversion(&target, &model, 1, &LabelKnowledge::Known(vec![Target::Value(y)]), &cfg).unwrap();
        let corr = correlation(&out.inputs[0], &x).abs();
        assert!(corr > 0.99, "trial {trial}: |corr| = {corr}");
    }
}

fn mlp_sample<R: Rng>(classes: usize, rng: &mut R) -> Sample {
    let c = rng.random_range(0..classes);
    Sample {
        x: synthetic_image(c, rng).pixels,
        target: Target::Class(c),
    }
}

#[test]
fn membership_separates_members_in_singleton_components() {
    let arch = Architecture::Mlp {
        inputs: 64,
        hidden: 32,
        classes: 4,
    };
    let model = ToyModel::init(arch, 0.5, 3);
    // One sample per node, as in the topology experiment.
    let n = 40;
    let mut rng = rng_from_seed(5);
    let datasets: Vec<Vec<Sample>> = (0..n).map(|_| vec![mlp_sample(4, &mut rng)]).collect();
    let gradients = datasets.iter().map(|d| local_gradient(&model, d).unwrap()).collect();
    let bundle = GradientBundle::new(0, gradients).unwrap();
    // No edges: every node is its own honest component.
    let p = honest_partition(&Graph::empty(n), &[]).unwrap();
    let mut candidates = Vec::new();
    for (i, d) in datasets.iter().enumerate() {
        for s in d {
            candidates.push(MembershipCandidate {
                target_node: i,
                member: true,
                gradients: vec![local_gradient(&model, std::slice::from_ref(s)).unwrap()],
            });
        }
        let s = mlp_sample(4, &mut rng);
        candidates.push(MembershipCandidate {
            target_node: i,
            member: false,
            gradients: vec![local_gradient(&model, &[s]).unwrap()],
        });
    }
    let out = membership_attack_eval(&p, &[bundle], &candidates, RoundPolicy::Average).unwrap();
    let AttackMetrics::Membership { auc, .. } = out.metrics else {
        panic!("expected membership metrics");
    };
    assert!(auc > 0.9, "auc {auc}");
}

#[test]
fn random_sum_gives_chance_auc() {
    let arch = Architecture::Mlp {
        inputs: 64,
        hidden: 16,
        classes: 4,
    };
    let model = ToyModel::init(arch, 0.5, 8);
    let mut rng = rng_from_seed(9);
    let fake_sum: Vec<f64> = (0..model.param_count())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut score = |_: ()| {
        let s = mlp_sample(4, &mut rng);
        membership_score(&local_gradient(&model, &[s]).unwrap(), &fake_sum).unwrap()
    };
    let members: Vec<f64> = (0..1500).map(|_| score(())).collect();
    let nonmembers: Vec<f64> = (0..1500).map(|_| score(())).collect();
    let auc = roc_auc(&members, &nonmembers).unwrap();
    assert!((auc - 0.5).abs() <= 0.05, "auc {auc}");
}

#[test]
fn decentralized_training_reduces_union_loss() {
    let g = Topology::Poisson.generate_connected(10, 15, 4).unwrap();
    let a = metropolis_weights(&g).unwrap();
    let arch = Architecture::Mlp {
        inputs: 64,
        hidden: 16,
        classes: 4,
    };
    let init = ToyModel::init(arch, 0.5, 6);
    let mut rng = rng_from_seed(12);
    let datasets: Vec<LocalDataset> = (0..10)
        .map(|_| LocalDataset::new((0..4).map(|_| mlp_sample(4, &mut rng)).collect()))
        .collect();
    let union: Vec<Sample> = datasets.iter().flat_map(|d| d.samples.clone()).collect();
    let trajectory = train_decentralized(&g, &a, &init, &datasets, 20, &ConsensusOptions::default()).unwrap();
    let loss = |w: &Vec<f64>| {
        ToyModel::with_params(arch, w.clone(), 0.5)
            .unwrap()
            .loss(&union)
            .unwrap()
    };
    let (first, last) = (loss(&trajectory[0]), loss(&trajectory[20]));
    assert!(last < first, "loss {first} -> {last}");
}

#[test]
fn zero_gradient_at_perfect_fit() {
    let arch = Architecture::LinearRegression { inputs: 3 };
    let model = ToyModel::with_params(arch, vec![1.0, -2.0, 0.5], 0.1).unwrap();
    let s = Sample {
        x: vec![1.0, 1.0, 2.0],
        target: Target::Value(0.0),
    };
    assert!(local_gradient(&model, &[s]).unwrap().iter().all(|g| g.abs() < 1e-15));

    let zero = ToyModel::with_params(arch, vec![0.0; 3], 0.1).unwrap();
    let s = Sample {
        x: vec![1.0, 2.0, 3.0],
        target: Target::Value(2.0),
    };
    assert_eq!(local_gradient(&zero, &[s]).unwrap(), vec![-2.0, -4.0, -6.0]);
}
