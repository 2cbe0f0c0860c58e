use std::collections::{BTreeSet, HashMap};

use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use viewsynth::retrieval::{
    evaluate_rankings, parse_rankings_tsv, part_related_patches, part_vad, pooled_pr_curve,
    run_retrieval, transferability_matrix, transferability_ranks, Distance, LabeledImageSet,
    LabeledItem,
};
use viewsynth::synthesis::PatchGramCache;
use viewsynth::{
    MultiViewDescriptor, PatchAddress, PatchGridConfig, RegionSelection, ShapeCollection,
    SolverOptions, SuitabilityTable, SynthesizedDescriptor, ViewSet,
};

fn item(id: &str, label: &str, data: Vec<f32>, v0: usize) -> LabeledItem<f32> {
    LabeledItem {
        id: id.into(),
        descriptor: SynthesizedDescriptor {
            descriptor: MultiViewDescriptor::new(2, 2, 1, data).unwrap(),
            observed_view: v0,
            provenance: None,
        },
        labels: BTreeSet::from([label.to_string()]),
    }
}

#[test]
fn hand_computed_pr_curve() {
    let mut pairs = vec![(3.0, true), (1.0, true), (2.0, false)];
    let c = pooled_pr_curve(&mut pairs).unwrap();
    assert_eq!(c.points[0], (0.0, 1.0));
    assert_eq!(c.points.len(), 4);
    // 0.5·1 + 0.5·(0.5 + 2/3)/2
    assert_abs_diff_eq!(c.auc, 0.5 + 0.25 * (0.5 + 2.0 / 3.0), epsilon = 1e-12);
}

#[test]
fn perfect_ranking_and_full_tie() {
    let mut perfect = vec![(0.1, true), (0.2, true), (0.5, false), (0.9, false)];
    assert_abs_diff_eq!(
        pooled_pr_curve(&mut perfect).unwrap().auc,
        1.0,
        epsilon = 1e-12
    );
    let mut tie = vec![(1.0, true), (1.0, false), (1.0, false), (1.0, false)];
    assert_abs_diff_eq!(
        pooled_pr_curve(&mut tie).unwrap().auc,
        0.25,
        epsilon = 1e-12
    );
    assert!(pooled_pr_curve(&mut [(1.0, false)]).is_err());
}

#[test]
fn ties_share_competition_rank_and_tsv_round_trips() {
    let set = LabeledImageSet::new(vec![
        item("q", "a", vec![0.0, 0.0, 0.0, 0.0], 0),
        item("x", "a", vec![1.0, 0.0, 0.0, 0.0], 0),
        item("y", "b", vec![0.0, 1.0, 0.0, 0.0], 0),
        item("z", "b", vec![0.0, 2.0, 0.0, 0.0], 0),
    ])
    .unwrap();
    let r = run_retrieval(&set, &Distance::Vad).unwrap();
    let ranks: Vec<usize> = r.rankings[0].iter().map(|c| c.rank).collect();
    assert_eq!(ranks, vec![1, 1, 3]);
    assert_eq!(r.rankings[0][0].candidate, 1);

    let rows = parse_rankings_tsv(&r.rankings_tsv(&set)).unwrap();
    let labels: HashMap<String, BTreeSet<String>> = set
        .items()
        .iter()
        .map(|i| (i.id.clone(), i.labels.clone()))
        .collect();
    let again = evaluate_rankings(&rows, &labels).unwrap();
    assert_abs_diff_eq!(again.auc, r.curve.unwrap().auc, epsilon = 1e-12);
}

#[test]
fn baseline_uses_observed_views_only() {
    let set = LabeledImageSet::new(vec![
        item("q", "a", vec![5.0, 5.0, 0.0, 0.0], 1),
        item("x", "a", vec![-5.0, 9.0, 0.0, 0.0], 1),
    ])
    .unwrap();
    let r = run_retrieval(&set, &Distance::BaselineL2).unwrap();
    assert_eq!(r.rankings[0][0].distance, 0.0);
}

#[test]
fn part_distance_over_every_patch_is_vad() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut d = || -> Vec<f32> { (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let (a, b) = (item("a", "a", d(), 0), item("b", "b", d(), 0));
    let all: BTreeSet<PatchAddress> = (0..2)
        .flat_map(|v| (0..2).map(move |g| PatchAddress::new(v, g)))
        .collect();
    let full = part_vad(&a.descriptor, &b.descriptor, &all).unwrap();
    assert_abs_diff_eq!(
        full,
        viewsynth::vad(&a.descriptor, &b.descriptor).unwrap(),
        epsilon = 1e-9
    );

    let table = SuitabilityTable::from_raw(
        2,
        2,
        vec![
            -1.0, -0.1, -0.2, -3.0, -1.0, -0.1, -0.2, -3.0, -1.0, -0.1, -0.2, -3.0, -1.0, -0.1,
            -0.2, -3.0,
        ],
    )
    .unwrap();
    let related = part_related_patches(&table, 0, &[1], RegionSelection::TopK(1)).unwrap();
    assert!(related.contains(&PatchAddress::new(0, 1)));
    assert!(related.iter().all(
        |a| a.view == 0 || table.get(0, a.view, 1, a.patch) >= table.get(0, a.view, 0, a.patch)
    ));
    assert!(part_related_patches(&table, 0, &[5], RegionSelection::TopK(1)).is_err());
}

#[test]
fn duplicated_shape_ranks_first_on_the_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (n, v, g, d) = (8, 3, 4, 5);
    let mut data: Vec<f32> = (0..n * v * g * d)
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();
    let per = v * g * d;
    let first: Vec<f32> = data[..per].to_vec();
    data[per..2 * per].copy_from_slice(&first);
    let c = ShapeCollection::from_raw(
        (0..n).map(|i| format!("s{i}")).collect(),
        ViewSet::uniform(v).unwrap(),
        PatchGridConfig::new(16, 8, 8).unwrap(),
        d,
        data,
    )
    .unwrap();
    let cache = PatchGramCache::new(&c);
    let m = transferability_matrix(&c, 3, &SolverOptions::default(), Some(&cache)).unwrap();
    let plain = transferability_matrix(&c, 3, &SolverOptions::default(), None).unwrap();
    assert_eq!(m, plain);
    assert!(m.avg_rank.iter().all(|&r| r >= 1.0));
    assert_eq!(m.to_csv().lines().count(), v);
    // Shapes 0 and 1 are identical, so their same-view reconstructions are exact.
    let ranks = transferability_ranks(&c, 3, &SolverOptions::default(), Some(&cache)).unwrap();
    for s in 0..2 {
        for i in 0..v {
            assert_eq!(ranks[s][i * v + i], 1.0);
        }
    }
}
