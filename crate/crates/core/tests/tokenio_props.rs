use proptest::prelude::*;
use taylorattn::tokenio::{read_tokens, write_tokens, HEADER_LEN};
use taylorattn::{Error, TokenTriple};

fn tokens_strategy() -> impl Strategy<Value = Vec<TokenTriple>> {
    (1usize..5, 1usize..5, 1usize..20).prop_flat_map(|(dk, dv, n)| {
        prop::collection::vec(
            (
                prop::collection::vec(any::<f64>(), dk),
                prop::collection::vec(any::<f64>(), dk),
                prop::collection::vec(any::<f64>(), dv),
            )
                .prop_map(|(q, k, v)| TokenTriple::new(q, k, v).unwrap()),
            n,
        )
    })
}

fn bits(t: &[TokenTriple]) -> Vec<u64> {
    t.iter()
        .flat_map(|t| t.query.iter().chain(&t.key).chain(&t.value).map(|x| x.to_bits()))
        .collect()
}

proptest! {
    #[test]
    fn roundtrip_preserves_bits(tokens in tokens_strategy()) {
        let mut buf = Vec::new();
        write_tokens(&mut buf, &tokens).unwrap();
        let width = tokens[0].query.len() * 2 + tokens[0].value.len();
        prop_assert_eq!(buf.len(), HEADER_LEN + tokens.len() * width * 8);
        let (header, back) = read_tokens(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(header.count as usize, tokens.len());
        prop_assert_eq!(bits(&back), bits(&tokens));
    }

    #[test]
    fn truncated_streams_are_rejected(tokens in tokens_strategy(), cut in 1usize..64) {
        let mut buf = Vec::new();
        write_tokens(&mut buf, &tokens).unwrap();
        let keep = buf.len().saturating_sub(cut);
        let res = read_tokens(&mut &buf[..keep]);
        prop_assert!(matches!(res, Err(Error::Format(_))));
    }
}

#[test]
fn bad_magic_rejected() {
    let mut buf = Vec::new();
    write_tokens(&mut buf, &[TokenTriple::new(vec![1.0], vec![2.0], vec![3.0]).unwrap()]).unwrap();
    buf[0] = b'X';
    assert!(matches!(read_tokens(&mut buf.as_slice()), Err(Error::Format(_))));
}
