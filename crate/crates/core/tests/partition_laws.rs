use std::collections::BTreeSet;

use proptest::prelude::*;

use sptdist::frontend::FormatSpec;
use sptdist::level::{derive_bundle, init_nonzero_partition, init_universe_partition, LevelPartition};
use sptdist::partition::{block_bounds, image, position_bounds, preimage};
use sptdist::{CoordRange, IndexSpace, Partition, Region, SparseTensor};

fn matrix(rows: usize, cols: usize, cells: &BTreeSet<(usize, usize)>) -> SparseTensor {
    let entries: Vec<(Vec<usize>, f64)> = cells
        .iter()
        .filter(|(i, j)| *i < rows && *j < cols)
        .enumerate()
        .map(|(k, &(i, j))| (vec![i, j], k as f64 + 1.0))
        .collect();
    SparseTensor::from_entries(vec![rows, cols], &FormatSpec::csr(), entries).unwrap()
}

fn arb_matrix() -> impl Strategy<Value = SparseTensor> {
    (1usize..20, 1usize..20, proptest::collection::btree_set((0usize..20, 0usize..20), 0..60))
        .prop_map(|(r, c, cells)| matrix(r, c, &cells))
}

fn arb_ranges() -> impl Strategy<Value = (usize, Vec<CoordRange>)> {
    (1usize..40).prop_flat_map(|dest| {
        let range = (0..dest, 0usize..4).prop_map(move |(lo, len)| {
            let hi = (lo + len).min(dest);
            CoordRange::new(lo as i64, hi as i64 - 1)
        });
        (Just(dest), proptest::collection::vec(range, 0..40))
    })
}

proptest! {
    #[test]
    fn image_then_preimage_covers_sources((dest, ranges) in arb_ranges(), colors in 1usize..6, seed in any::<u64>()) {
        let n = ranges.len();
        let subsets: Vec<Vec<usize>> = (0..colors)
            .map(|c| (0..n).filter(|i| (seed >> ((i * 7 + c) % 64)) & 1 == 1).collect())
            .collect();
        let region = Region::new(IndexSpace::linear(n), ranges.clone()).unwrap();
        let space = IndexSpace::linear(dest);
        let src = Partition::new(IndexSpace::linear(n), subsets.clone()).unwrap();
        let img = image(&region, &src, &space).unwrap();
        let back = preimage(&region, &img, &space).unwrap();
        for c in 0..colors {
            for &i in src.subset(c) {
                for d in ranges[i].iter() {
                    prop_assert!(img.contains(c, d));
                }
                if !ranges[i].is_empty() {
                    prop_assert!(back.contains(c, i));
                }
            }
        }
    }

    #[test]
    fn row_blocks_own_exactly_their_rows(t in arb_matrix(), pieces in 1usize..6) {
        let rows = t.dims()[0];
        let mut b = init_universe_partition(&t, 0, pieces);
        for c in 0..pieces {
            b.create_entry(c, &[block_bounds(rows, pieces, c)]).unwrap();
        }
        let bundle = derive_bundle(&t, 0, b.finalize().unwrap()).unwrap();
        prop_assert!(bundle.vals.is_disjoint());
        let covered: usize = (0..pieces).map(|c| bundle.vals.subset(c).len()).sum();
        prop_assert_eq!(covered, t.nnz());
        for (k, (coords, _)) in t.iterate_leaves().enumerate() {
            let owner = (0..pieces).find(|&c| block_bounds(rows, pieces, c).contains(coords[0])).unwrap();
            prop_assert_eq!(bundle.vals.colors_of(k), vec![owner]);
        }
    }

    #[test]
    fn nonzero_split_is_even_and_closed(t in arb_matrix(), pieces in 1usize..6) {
        let nnz = t.nnz();
        let mut b = init_nonzero_partition(&t, 1, pieces);
        for c in 0..pieces {
            b.create_entry(c, position_bounds(nnz, pieces, c)).unwrap();
        }
        let bundle = derive_bundle(&t, 1, b.finalize().unwrap()).unwrap();
        let sizes: Vec<usize> = (0..pieces).map(|c| bundle.vals.subset(c).len()).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), nnz);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= nnz % pieces);
        let LevelPartition::Compressed { pos, .. } = &bundle.levels[1] else {
            panic!("CSR second level is compressed");
        };
        for c in 0..pieces {
            for &q in bundle.vals.subset(c) {
                prop_assert!(pos.contains(c, t.parent_of(1, q)));
            }
        }
    }
}
