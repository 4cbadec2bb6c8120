use hypercert::hypernet::*;
use hypercert::tasks::{gen_moons_task, MoonsEnvironmentSpec};
use hypercert::tensor::{Rng, Tensor};

fn config(architecture: Architecture, c: usize, b: usize) -> HypernetConfig {
    HypernetConfig {
        architecture,
        input_dim: 2,
        c,
        b,
        mlp1: vec![16, 16],
        mlp2: vec![12],
        mlp3: vec![8],
        embed_dim: 6,
        key_dim: 5,
    }
}

fn all_configs() -> Vec<HypernetConfig> {
    vec![
        config(Architecture::SchMinus, 3, 0),
        config(Architecture::SchPlus, 2, 4),
        config(Architecture::Pbh, 0, 4),
        config(Architecture::PbSch, 2, 3),
    ]
}

fn task(n: usize, seed: u64) -> (Tensor, Vec<f64>) {
    let spec = MoonsEnvironmentSpec { examples_per_task: n, ..Default::default() };
    let t = gen_moons_task(&spec, 0, seed);
    (t.features, t.labels)
}

fn permuted(x: &Tensor, y: &[f64], perm: &[usize]) -> (Tensor, Vec<f64>) {
    let rows = compression_rows(x, y, perm);
    let d = x.cols();
    let feats = rows.values.chunks(d + 1).flat_map(|r| r[..d].to_vec()).collect();
    (Tensor::matrix(perm.len(), d, feats).unwrap(), perm.iter().map(|&i| y[i]).collect())
}

#[test]
fn outputs_are_permutation_invariant() {
    let (x, y) = task(40, 5);
    for cfg in all_configs() {
        let net = Hypernet::new(cfg.clone(), &mut Rng::from_seed(8)).unwrap();
        let base = net.infer(&x, &y, Noise::Zero).unwrap();
        for s in 0..3 {
            let perm = Rng::from_seed(100 + s).permutation(40);
            let (px, py) = permuted(&x, &y, &perm);
            let other = net.infer(&px, &py, Noise::Zero).unwrap();
            assert_eq!(base.gamma, other.gamma, "{}", cfg.architecture);
            assert_eq!(base.binary_message, other.binary_message);
            assert_eq!(base.gaussian_mean, other.gaussian_mean);
            let mapped: Vec<usize> = other.indices.iter().map(|&i| perm[i]).collect();
            assert_eq!(base.indices, mapped);
        }
    }
}

#[test]
fn predictor_depends_only_on_the_bottleneck() {
    let (x, y) = task(30, 6);
    for cfg in all_configs() {
        let net = Hypernet::new(cfg.clone(), &mut Rng::from_seed(9)).unwrap();
        let art = net.infer(&x, &y, Noise::Zero).unwrap();
        assert_eq!(art.indices.len(), cfg.c);
        assert!(art.indices.iter().all(|&i| i < 30));
        assert_eq!(art.gamma.len(), cfg.gamma_len());
        match cfg.architecture {
            Architecture::SchMinus => assert!(art.binary_message.is_none() && art.gaussian_mean.is_none()),
            Architecture::SchPlus => {
                let msg = art.binary_message.as_ref().unwrap();
                assert!(msg.iter().all(|v| *v == 1.0 || *v == -1.0));
                assert!(art.gaussian_mean.is_none());
            }
            _ => {
                let mu = art.gaussian_mean.as_ref().unwrap();
                assert!(mu.iter().all(|v| v.abs() < 1.0));
                assert!(art.binary_message.is_none());
            }
        }
        // The same weights come back from the compression set and message alone.
        let j = art.distinct_indices();
        let rows = (!j.is_empty()).then(|| compression_rows(&x, &y, &j));
        let message = art.binary_message.clone().or(art.gaussian_mean.clone());
        assert_eq!(net.reconstruct_values(rows.as_ref(), message.as_deref()).unwrap(), art.gamma);
    }
}

#[test]
fn selected_rows_fix_the_predictor() {
    // Nudging every non-selected example leaves gamma untouched as long as the
    // selection does not change.
    let (x, y) = task(30, 7);
    let net = Hypernet::new(config(Architecture::SchMinus, 3, 0), &mut Rng::from_seed(10)).unwrap();
    let art = net.infer(&x, &y, Noise::Zero).unwrap();
    let j = art.distinct_indices();
    let mut other = x.clone();
    for i in (0..30).filter(|i| !j.contains(i)) {
        other.values[2 * i] += 1e-4;
    }
    let moved = net.infer(&other, &y, Noise::Zero).unwrap();
    assert_eq!(moved.distinct_indices(), j);
    assert_eq!(moved.gamma, art.gamma);
}

#[test]
fn gaussian_noise_reaches_the_predictor() {
    let (x, y) = task(20, 8);
    let net = Hypernet::new(config(Architecture::Pbh, 0, 4), &mut Rng::from_seed(11)).unwrap();
    let a = net.infer(&x, &y, Noise::Zero).unwrap();
    let b = net.infer(&x, &y, Noise::Given(&[0.5, -0.5, 1.0, 0.0])).unwrap();
    assert_eq!(a.gaussian_mean, b.gaussian_mean);
    assert_ne!(a.gamma, b.gamma);
    assert!(net.infer(&x, &y, Noise::Given(&[0.5])).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = task(25, 9);
    for cfg in all_configs() {
        let net = Hypernet::new(cfg.clone(), &mut Rng::from_seed(12)).unwrap();
        let ck = Checkpoint::from_hypernet(&net, 77, vec![1, 2, 3]);
        let path = dir.path().join(format!("{}.json", cfg.architecture));
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.master_seed, 77);
        assert_eq!(back.training_task_ids, vec![1, 2, 3]);
        let restored = back.to_hypernet().unwrap();
        assert_eq!(restored.params.flatten(), net.params.flatten());
        assert_eq!(restored.infer(&x, &y, Noise::Zero).unwrap(), net.infer(&x, &y, Noise::Zero).unwrap());
    }
}

#[test]
fn checkpoint_rejects_unknown_version() {
    let net = Hypernet::new(config(Architecture::SchMinus, 1, 0), &mut Rng::from_seed(1)).unwrap();
    let json = Checkpoint::from_hypernet(&net, 0, vec![]).to_json().unwrap();
    let bumped = json.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
    assert_ne!(bumped, json);
    assert!(Checkpoint::from_json(&bumped).is_err());
}
