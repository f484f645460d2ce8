//! Property tests for the algebraic invariants the protocols lean on.

use proptest::collection::vec as pvec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use specpir_core::batch::{strassen_mul, FieldMatrix};
use specpir_core::bits::PackedBits;
use specpir_core::chor;
use specpir_core::gf256::{lagrange_at_zero, Gf256, Poly};
use specpir_core::sharing::{reconstruct, share_vector, EvalPointSet};
use specpir_core::spectrumdb::{basis_vector, SpectrumRecord};

fn naive_oracle(a: &FieldMatrix, b: &FieldMatrix) -> FieldMatrix {
    let mut out = FieldMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = Gf256::ZERO;
            for k in 0..a.cols() {
                acc += Gf256(a.row(i)[k]) * Gf256(b.row(k)[j]);
            }
            out.row_mut(i)[j] = acc.0;
        }
    }
    out
}

proptest! {
    #[test]
    fn eval_then_interpolate_recovers_constant(
        coeffs in pvec(any::<u8>(), 1..=11),
        xs in proptest::sample::subsequence((1u8..=255).collect::<Vec<_>>(), 11),
    ) {
        let poly = Poly::new(coeffs.iter().map(|&c| Gf256(c)).collect());
        prop_assume!(xs.len() > poly.degree());
        let points: Vec<(Gf256, Gf256)> = xs
            .iter()
            .take(poly.degree() + 1)
            .map(|&x| (Gf256(x), poly.eval(Gf256(x))))
            .collect();
        prop_assert_eq!(lagrange_at_zero(&points).unwrap(), Gf256(coeffs[0]));
    }

    #[test]
    fn sharing_round_trips(
        secret in pvec(any::<u8>(), 1..16),
        ell in 2usize..=8,
        t_raw in 0usize..8,
        seed in any::<u64>(),
    ) {
        let t = t_raw % ell;
        let secret: Vec<Gf256> = secret.into_iter().map(Gf256).collect();
        let points = EvalPointSet::server_indices(ell).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let shares = share_vector(&secret, t, &points, &mut rng).unwrap();
        prop_assert_eq!(reconstruct(&shares, t).unwrap(), secret.clone());
        // Any t+1 subset suffices.
        let subset: Vec<_> = shares.into_iter().skip(ell - t - 1).collect();
        prop_assert_eq!(reconstruct(&subset, t).unwrap(), secret);
    }

    #[test]
    fn chor_vectors_xor_to_selection(
        rows in 1usize..200,
        ell in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let beta = (seed % rows as u64) + 1;
        let q = chor::build_query(beta, rows, ell, &mut rng).unwrap();
        let mut acc = PackedBits::zeros(rows);
        for v in &q.vectors {
            acc.xor_assign(v).unwrap();
        }
        prop_assert_eq!(acc, basis_vector(beta, rows).unwrap());
    }

    #[test]
    fn packed_bits_byte_round_trip(bits in pvec(any::<bool>(), 1..300)) {
        let mut v = PackedBits::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        let back = PackedBits::from_bytes(&v.to_bytes(), bits.len()).unwrap();
        prop_assert_eq!(v, back);
    }

    #[test]
    fn strassen_equals_naive(
        m in 1usize..24,
        k in 1usize..24,
        n in 1usize..24,
        cutoff in 1usize..5,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut adata = vec![0u8; m * k];
        let mut bdata = vec![0u8; k * n];
        rand::RngCore::fill_bytes(&mut rng, &mut adata);
        rand::RngCore::fill_bytes(&mut rng, &mut bdata);
        let a = FieldMatrix::from_data(m, k, adata).unwrap();
        let b = FieldMatrix::from_data(k, n, bdata).unwrap();
        prop_assert_eq!(
            strassen_mul(a.as_ref(), b.as_ref(), cutoff).unwrap(),
            naive_oracle(&a, &b)
        );
    }

    #[test]
    fn synthesized_records_checksum(seed in any::<u64>(), beta in 1u64..10_000, len in 16usize..64) {
        let rec = SpectrumRecord::synthesize(seed, beta, len);
        prop_assert!(rec.verify_checksum());
        // Any single-byte corruption is caught.
        let mut bytes = rec.as_bytes().to_vec();
        bytes[(seed % len as u64) as usize] ^= 0x01;
        prop_assert!(!SpectrumRecord::from_bytes(bytes).verify_checksum());
    }
}
