use std::sync::OnceLock;

use num_bigint::{BigUint, RandBigInt};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use vldp_core::codec::Reader;
use vldp_core::group::GroupParams;
use vldp_core::ot;
use vldp_core::proofs::{self, Candidates, DisjunctSpec};

fn word_group() -> &'static GroupParams {
    static G: OnceLock<GroupParams> = OnceLock::new();
    G.get_or_init(|| GroupParams::generate(56, 64, &mut ChaCha20Rng::seed_from_u64(64)).unwrap())
}

fn wide_group() -> &'static GroupParams {
    static G: OnceLock<GroupParams> = OnceLock::new();
    G.get_or_init(|| GroupParams::generate(120, 128, &mut ChaCha20Rng::seed_from_u64(128)).unwrap())
}

fn small_group() -> &'static GroupParams {
    static G: OnceLock<GroupParams> = OnceLock::new();
    G.get_or_init(|| GroupParams::generate(16, 24, &mut ChaCha20Rng::seed_from_u64(16)).unwrap())
}

/// Left-to-right square-and-multiply on plain big integers.
fn naive_pow(base: &BigUint, exp: &BigUint, p: &BigUint) -> BigUint {
    let mut acc = BigUint::from(1u32);
    for i in (0..exp.bits()).rev() {
        acc = &acc * &acc % p;
        if exp.bit(i) {
            acc = &acc * base % p;
        }
    }
    acc
}

fn check_pow(params: &GroupParams, seed: u64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let p = params.p();
    let x = rng.gen_biguint_range(&BigUint::from(1u32), p);
    let e = rng.gen_biguint_range(&BigUint::from(0u32), params.q());
    let base = params.element_from_biguint(&x).unwrap();
    let exp = params.scalar(&e);
    assert_eq!(params.pow(&base, &exp).to_biguint(), naive_pow(&x, &e, p), "x={x} e={e}");
    assert_eq!(params.g_pow(&exp).to_biguint(), naive_pow(&params.g().to_biguint(), &e, p));
    assert_eq!(params.h_pow(&exp).to_biguint(), naive_pow(&params.h().to_biguint(), &e, p));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn modexp_matches_naive_oracle_word(seed in any::<u64>()) {
        check_pow(word_group(), seed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn modexp_matches_naive_oracle_wide(seed in any::<u64>()) {
        check_pow(wide_group(), seed);
    }

    #[test]
    fn pedersen_is_additively_homomorphic(seed in any::<u64>(), wide in any::<bool>()) {
        let params = if wide { wide_group() } else { word_group() };
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (m1, r1, m2, r2) = (
            params.random_scalar(&mut rng),
            params.random_scalar(&mut rng),
            params.random_scalar(&mut rng),
            params.random_scalar(&mut rng),
        );
        let lhs = params.mul(&params.commit(&m1, &r1), &params.commit(&m2, &r2));
        let rhs = params.commit(&params.scalar_add(&m1, &m2), &params.scalar_add(&r1, &r2));
        prop_assert_eq!(&lhs, &rhs);
        // and against big-integer evaluation of g^m h^r mod p
        let q = params.q();
        let m = (m1.to_biguint() + m2.to_biguint()) % q;
        let r = (r1.to_biguint() + r2.to_biguint()) % q;
        let direct = naive_pow(&params.g().to_biguint(), &m, params.p())
            * naive_pow(&params.h().to_biguint(), &r, params.p())
            % params.p();
        prop_assert_eq!(lhs.to_biguint(), direct);
    }

    #[test]
    fn element_and_scalar_encodings_round_trip(seed in any::<u64>(), wide in any::<bool>()) {
        let params = if wide { wide_group() } else { word_group() };
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let s = params.random_scalar(&mut rng);
        let e = params.random_element(&mut rng);
        let mut buf = Vec::new();
        params.encode_element(&e, &mut buf);
        params.encode_scalar(&s, &mut buf);
        prop_assert_eq!(buf.len(), 8 + params.element_len() + params.scalar_len());
        let mut r = Reader::new(&buf);
        prop_assert_eq!(params.decode_member(&mut r).unwrap(), e);
        prop_assert_eq!(params.decode_scalar(&mut r).unwrap(), s);
        prop_assert!(r.finish().is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn small_exponent_decoding_inverts_g_powers(
        raw in prop::collection::hash_set(0u64..1_000_000, 1..40),
    ) {
        let params = word_group();
        let candidates: Vec<_> = raw.iter().map(|&c| params.scalar_from_u64(c)).collect();
        for (j, c) in candidates.iter().enumerate() {
            prop_assert_eq!(params.decode_small_exponent(&params.g_pow(c), &candidates).unwrap(), Some(j));
        }
    }

    #[test]
    fn honest_or_proofs_verify_and_shares_sum_to_the_challenge(
        seed in any::<u64>(),
        len in 2usize..12,
        pick in any::<prop::sample::Index>(),
    ) {
        let params = word_group();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let cands = Candidates::new(params, (0..len as u64).map(|i| params.scalar_from_u64(i * 7 + 1)).collect()).unwrap();
        let index = pick.index(len);
        let t = params.random_scalar(&mut rng);
        let statement = params.commit(&cands.exponents()[index], &t);
        let spec = DisjunctSpec { statement: &statement, candidates: &cands };
        let (commit, state) = proofs::or_prove_commit(params, spec, index, &t, &mut rng).unwrap();
        let x = proofs::or_challenge(params, &mut rng);
        let resp = proofs::or_prove_respond(params, state, &x);
        prop_assert_eq!(proofs::or_verify(params, spec, &commit, &x, &resp), Ok(()));
        prop_assert_eq!(params.scalar_sum(resp.challenges.iter()), x);
    }
}

/// Every vector length up to 32 and every selection index: the selected
/// slot unmasks to exactly its payload.
#[test]
fn ot_round_trip_is_exhaustive_at_small_scale() {
    let params = small_group();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut checked = 0;
    for n in 1..=32u64 {
        let payloads: Vec<_> = (0..n).map(|i| params.scalar_from_u64(3 * i + 2)).collect();
        for sigma in 1..=n {
            let (query, secret) = ot::ot_query(params, sigma, &mut rng);
            assert!(query.is_valid(params));
            let (pairs, _) = ot::ot_encrypt_vector(params, &query, &payloads, &mut rng);
            let chosen = &pairs[(sigma - 1) as usize];
            assert_eq!(ot::ot_unmask(params, &secret, chosen), params.g_pow(&payloads[(sigma - 1) as usize]));
            assert_eq!(ot::ot_decrypt(params, &secret, chosen, &payloads).unwrap(), (sigma - 1) as usize);
            checked += 1;
        }
    }
    assert_eq!(checked, 32 * 33 / 2);
}

#[test]
fn single_slot_encryption_matches_vector_encryption() {
    let params = small_group();
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    for sigma in 1..=8 {
        let (query, secret) = ot::ot_query(params, sigma, &mut rng);
        let payload = params.scalar_from_u64(40 + sigma);
        let (pair, _) = ot::ot_encrypt_slot(params, &query, sigma, &payload, &mut rng);
        assert_eq!(ot::ot_unmask(params, &secret, &pair), params.g_pow(&payload));
    }
}
