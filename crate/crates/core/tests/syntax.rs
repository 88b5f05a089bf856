use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stsl_core::gen::{random_model, RandomModelConfig};
use stsl_core::parse;

const CORPUS: &[&str] = &[
    "noise(loc=rw())",
    "noise(loc=rw(loc=rw()))",
    "noise(loc=cp(rw(loc=ar1()), rw(loc=ar1())))",
    "noise(loc=zero(), scale=grw())",
    "noise(loc=seasonal(period=7) + seasonal(period=30) + cp(seasonal(period=7), seasonal(period=30)))",
    "noise(loc=nonmarkov(fn=optim-null))",
    "noise(loc=rw(loc=ar1()))",
    "noise(loc=trend() + seasonal(period=12) + ar1())",
];

#[test]
fn corpus_parses_and_reprints() {
    for src in CORPUS {
        let m = parse(src).unwrap();
        assert_eq!(&m.print_canonical(), src);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn print_then_parse_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, &RandomModelConfig::default());
        prop_assert!(m.validate().is_empty());
        let text = m.print_canonical();
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.print_canonical(), text);
    }

    #[test]
    fn parse_is_total(src in "[a-z0-9(),=?+#. \n-]{0,40}") {
        // either an AST or an error, never a panic; errors point into the input
        if let Err(e) = parse(&src) {
            let lines: Vec<&str> = src.split('\n').collect();
            prop_assert!(e.line >= 1 && e.line <= lines.len());
            prop_assert!(e.col >= 1 && e.col <= lines[e.line - 1].chars().count() + 1);
        }
    }

    #[test]
    fn lexical_defects_are_reported_where_they_occur(
        which in 0..CORPUS.len(),
        at in any::<prop::sample::Index>(),
        with in prop::sample::select(vec!['$', 'Z', '@', '!', '*']),
    ) {
        let src = CORPUS[which];
        let mut chars: Vec<char> = src.chars().collect();
        let i = at.index(chars.len());
        chars[i] = with;
        let broken: String = chars.into_iter().collect();
        let e = parse(&broken).unwrap_err();
        prop_assert_eq!((e.line, e.col), (1, i + 1));
    }

    #[test]
    fn structural_defects_are_reported_inside_the_input(
        which in 0..CORPUS.len(),
        at in any::<prop::sample::Index>(),
        with in prop::sample::select(vec![')', '(', ',', '=', '+', '?', '1']),
    ) {
        let src = CORPUS[which];
        let mut chars: Vec<char> = src.chars().collect();
        let i = at.index(chars.len());
        chars[i] = with;
        let broken: String = chars.into_iter().collect();
        if let Err(e) = parse(&broken) {
            prop_assert_eq!(e.line, 1);
            prop_assert!(e.col <= broken.chars().count() + 1);
        }
    }

    #[test]
    fn truncation_is_reported_at_or_before_end_of_input(
        which in 0..CORPUS.len(),
        at in any::<prop::sample::Index>(),
    ) {
        let src = CORPUS[which];
        let cut = at.index(src.len());
        let e = parse(&src[..cut]).unwrap_err();
        prop_assert!(e.col <= cut + 1);
    }
}
