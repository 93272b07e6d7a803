use proptest::prelude::*;
use std::collections::HashSet;
use std::sync::Arc;
use voxcolor::baselines::{upsample_devox, upsample_knn, upsample_waan};
use voxcolor::data::{read_ply_from, write_ply_to};
use voxcolor::exec;
use voxcolor::geometry::{compute_offsets, devoxelize, voxelize, PointCloud};
use voxcolor::model::{Batch, CuNet, ModelConfig};
use voxcolor::sparse::{sparse_conv, SparseCoords, SparseTensor};
use voxcolor::tensor::{gradcheck::random_tensor, Graph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cloud_strategy(max_extent: u32, max_points: usize) -> impl Strategy<Value = PointCloud> {
    (4..=max_extent).prop_flat_map(move |s| {
        proptest::collection::vec(
            ([0..s, 0..s, 0..s], [0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0]),
            1..max_points,
        )
        .prop_map(move |pts| {
            let mut seen = HashSet::new();
            let (coords, colors): (Vec<_>, Vec<_>) = pts.into_iter().filter(|(c, _)| seen.insert(*c)).unzip();
            PointCloud::new(coords, Some(colors), s).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn voxelize_groups_by_integer_division(hr in cloud_strategy(40, 300), v in 2u32..6) {
        prop_assume!(v < hr.extent());
        let (lr, mapping) = voxelize(&hr, v).unwrap();
        prop_assert!(mapping.is_surjective());
        prop_assert!(lr.len() <= hr.len());
        prop_assert_eq!(lr.extent(), hr.extent().div_ceil(v));
        for (j, p) in hr.coords().iter().enumerate() {
            prop_assert_eq!(lr.coords()[mapping.map()[j] as usize], p.map(|x| x / v));
        }
        let counts = mapping.child_counts();
        prop_assert_eq!(counts.iter().map(|&c| c as usize).sum::<usize>(), hr.len());
    }

    #[test]
    fn offsets_stay_in_unit_cube(hr in cloud_strategy(40, 200), v in 2u32..7) {
        prop_assume!(v < hr.extent());
        let (lr, mapping) = voxelize(&hr, v).unwrap();
        for d in compute_offsets(&hr, &lr, &mapping).unwrap() {
            for x in d {
                prop_assert!((-1.0..=1.0).contains(&x));
                if v == 2 {
                    prop_assert!(x == -1.0 || x == 1.0);
                }
            }
        }
    }

    #[test]
    fn devoxelize_preserves_per_voxel_mean(hr in cloud_strategy(30, 200), v in 2u32..5) {
        prop_assume!(v < hr.extent());
        let (lr, mapping) = voxelize(&hr, v).unwrap();
        let up = devoxelize(lr.colors().unwrap(), &mapping).unwrap();
        // Re-voxelizing the devoxelized cloud is a fixed point.
        let again = PointCloud::new(hr.coords().to_vec(), Some(up), hr.extent()).unwrap();
        let (lr2, _) = voxelize(&again, v).unwrap();
        for (a, b) in lr.colors().unwrap().iter().zip(lr2.colors().unwrap()) {
            for c in 0..3 {
                prop_assert!((a[c] - b[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn baselines_are_permutation_equivariant(hr in cloud_strategy(30, 150), seed in 0u64..1000) {
        prop_assume!(hr.extent() > 3);
        let (lr, _) = voxelize(&hr, 3).unwrap();
        let n = hr.len();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + seed as usize) % n).collect();
        prop_assume!(perm.iter().collect::<HashSet<_>>().len() == n);
        let shuffled = hr.permuted(&perm).unwrap();
        let knn = upsample_knn(&lr, &hr, 3, 3).unwrap();
        let knn_p = upsample_knn(&lr, &shuffled, 3, 3).unwrap();
        let waan = upsample_waan(&lr, &hr, 3, None).unwrap();
        let waan_p = upsample_waan(&lr, &shuffled, 3, None).unwrap();
        let devox = upsample_devox(&lr, &hr, 3).unwrap();
        let devox_p = upsample_devox(&lr, &shuffled, 3).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            prop_assert_eq!(knn_p[new], knn[old]);
            prop_assert_eq!(waan_p[new], waan[old]);
            prop_assert_eq!(devox_p[new], devox[old]);
        }
    }

    #[test]
    fn ply_round_trip_is_idempotent(cloud in cloud_strategy(60, 200)) {
        let mut first = Vec::new();
        write_ply_to(&cloud, &mut first).unwrap();
        let back = read_ply_from(first.as_slice()).unwrap();
        prop_assert_eq!(back.coords(), cloud.coords());
        prop_assert_eq!(back.extent(), cloud.extent());
        for (a, b) in back.colors().unwrap().iter().zip(cloud.colors().unwrap()) {
            for c in 0..3 {
                prop_assert!((a[c] - b[c]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
        let mut second = Vec::new();
        write_ply_to(&back, &mut second).unwrap();
        prop_assert_eq!(first, second);
    }
}

#[test]
fn sparse_conv_is_bit_identical_across_execution_modes() {
    let hr = voxcolor::eval::bench_cloud(20_000, 3).unwrap();
    let (lr, _) = voxelize(&hr, 2).unwrap();
    let coords = lr.coords().iter().map(|c| [c[0] as i32, c[1] as i32, c[2] as i32, 0]).collect();
    let sc = Arc::new(SparseCoords::new(coords).unwrap());
    let km = sc.kernel_map(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = SparseTensor::new(sc.clone(), random_tensor::<f32>(&mut rng, &[lr.len(), 16])).unwrap();
    let w = random_tensor::<f32>(&mut rng, &[27, 16, 8]);
    let par = sparse_conv(&x, &w, &km).unwrap();
    let seq = exec::sequential(|| sparse_conv(&x, &w, &km).unwrap());
    assert_eq!(par.features.data(), seq.features.data());
}

#[test]
fn training_step_gradients_are_bit_identical_across_execution_modes() {
    let hr = voxcolor::eval::bench_cloud(8_000, 4).unwrap();
    let (lr, mapping) = voxelize(&hr, 2).unwrap();
    let net = CuNet::<f32>::with_init(ModelConfig { channels: 16, blocks: 2, v_train: 2, ..Default::default() }, 2, false).unwrap();
    let batch = Batch::<f32>::new(&[(&lr, &hr, &mapping)], 3).unwrap();
    let grads = || {
        let mut g = Graph::new();
        let pred = net.forward_batch(&mut g, &batch, true, &mut Vec::new()).unwrap();
        let t = g.constant(batch.target.clone().unwrap());
        let l = g.mse_loss(pred, t).unwrap();
        g.backward(l).unwrap();
        g.param_grads(net.store())
            .into_iter()
            .map(|t| t.map(|t| t.into_data()))
            .collect::<Vec<_>>()
    };
    let par = grads();
    let seq = exec::sequential(grads);
    assert_eq!(par, seq);
}

#[test]
fn untrained_network_is_devoxelization_on_synthetic_objects() {
    for seed in 0..3 {
        let hr = voxcolor::eval::bench_cloud(5_000, seed).unwrap();
        for v in [2, 3, 5] {
            let (lr, _) = voxelize(&hr, v).unwrap();
            let geometry = hr.without_colors();
            let net = CuNet::<f32>::new(ModelConfig { channels: 8, blocks: 1, v_train: v, ..Default::default() }, seed).unwrap();
            assert_eq!(net.upsample(&lr, &geometry, v).unwrap(), upsample_devox(&lr, &geometry, v).unwrap());
        }
    }
}
