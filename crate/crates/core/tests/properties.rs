use proptest::prelude::*;

use qexpand::boolean_query::{matches, parse, render, Document, OrGroup, QueryAst, Term};
use qexpand::clustering::{cluster_score, group_score, optimize_grouping, Cluster, Grouping};
use qexpand::evaluation::{
    confusion_and_accuracy, false_positive_rate, true_positive_rate, ScoringVector,
};
use qexpand::ranking::{select_top, word_distance};
use qexpand::suggestions::Suggestion;
use qexpand::vector_model::{VectorModel, WordVector};

fn nonzero_vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim)
        .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-6))
}

fn vector_set(max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..12).prop_flat_map(move |dim| prop::collection::vec(nonzero_vector(dim), 1..=max))
}

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,6}( [a-z]{1,6})?"
}

fn ast() -> impl Strategy<Value = QueryAst> {
    prop::collection::vec(prop::collection::vec(word(), 1..5), 1..4)
        .prop_map(|groups| QueryAst::from_strings(groups).expect("non-empty"))
}

fn bits(len: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), len)
}

proptest! {
    #[test]
    fn cluster_score_is_bounded(set in vector_set(20)) {
        let s = cluster_score(&set).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn cluster_score_ignores_order_and_positive_scale(set in vector_set(12), k in 0.1f64..50.0) {
        let s = cluster_score(&set).unwrap();
        let mut reversed = set.clone();
        reversed.reverse();
        let scaled: Vec<Vec<f64>> = set.iter().map(|v| v.iter().map(|x| x * k).collect()).collect();
        prop_assert!((cluster_score(&reversed).unwrap() - s).abs() <= 1e-12);
        prop_assert!((cluster_score(&scaled).unwrap() - s).abs() <= 1e-12);
    }

    #[test]
    fn single_member_scores_one(v in nonzero_vector(6)) {
        prop_assert_eq!(cluster_score(&[v]).unwrap(), 1.0);
    }

    #[test]
    fn optimizer_score_is_consistent(set in vector_set(10), m in 1usize..4, seed in any::<u64>()) {
        prop_assume!(set.len() >= m);
        let vectors: Vec<WordVector> = set
            .into_iter()
            .enumerate()
            .map(|(i, c)| WordVector::new(format!("w{i}"), c))
            .collect();
        let g = optimize_grouping(&vectors, m, 300, seed).unwrap();
        prop_assert_eq!(g.len(), m);
        prop_assert_eq!(g.member_count(), vectors.len());
        prop_assert!(g.clusters.iter().all(|c| !c.members.is_empty()));
        let recomputed = group_score(&g).unwrap();
        prop_assert!((g.score - recomputed).abs() <= 1e-9 * recomputed.max(1.0));
        prop_assert!(g.score <= m as f64 + 1e-12);
        let again = optimize_grouping(&vectors, m, 300, seed).unwrap();
        prop_assert_eq!(g, again);
    }

    #[test]
    fn render_parse_round_trip(ast in ast()) {
        let text = render(&ast).unwrap();
        let parsed = parse(&text).unwrap();
        prop_assert_eq!(&parsed, &ast);
        prop_assert_eq!(render(&parsed).unwrap(), text);
    }

    #[test]
    fn adding_an_or_term_never_loses_matches(ast in ast(), extra in word(), text in "[a-z ]{0,60}") {
        let doc = Document::new("d", "", text);
        let mut groups: Vec<OrGroup> = ast.groups().to_vec();
        let widened: Vec<Term> = groups[0].terms().iter().cloned().chain(Term::new(&extra)).collect();
        groups[0] = OrGroup::new(widened).unwrap();
        let wider = QueryAst::new(groups).unwrap();
        if matches(&ast, &doc) {
            prop_assert!(matches(&wider, &doc));
        }
    }

    #[test]
    fn adding_an_and_group_never_gains_matches(ast in ast(), extra in ast(), text in "[a-z ]{0,60}") {
        let doc = Document::new("d", "", text);
        let narrower = extra.groups().iter().cloned().fold(ast.clone(), QueryAst::and);
        if matches(&narrower, &doc) {
            prop_assert!(matches(&ast, &doc));
        }
    }

    #[test]
    fn select_top_is_sorted_bounded_and_in_vocabulary(
        rows in prop::collection::vec(nonzero_vector(4), 1..20),
        query in nonzero_vector(4),
        n in 1usize..25,
    ) {
        let model = VectorModel::from_vectors(
            4,
            rows.into_iter().enumerate().map(|(i, c)| WordVector::new(format!("t{i}"), c)),
        )
        .unwrap();
        let q = WordVector::new("query", query);
        let suggestions: Vec<Suggestion> = (0..30)
            .map(|i| Suggestion { term: format!("t{i}"), provider_rank: i, provider_score: None })
            .collect();
        let top = select_top(&model, &q, &suggestions, n);
        prop_assert!(top.len() <= n);
        prop_assert_eq!(top.len(), n.min(model.vocab_size()));
        prop_assert!(top.windows(2).all(|w| w[0].distance <= w[1].distance));
        for r in &top {
            prop_assert!(model.contains(&r.word.token));
            prop_assert!((word_distance(&r.word, &q).unwrap() - r.distance).abs() == 0.0);
        }
    }

    #[test]
    fn metrics_match_counting_oracle(pair in (1usize..80).prop_flat_map(|n| (bits(n), bits(n)))) {
        let (o, b) = pair;
        let m = confusion_and_accuracy(&ScoringVector::new(o.clone()), &ScoringVector::new(b.clone())).unwrap();
        let count = |f: &dyn Fn(bool, bool) -> bool| o.iter().zip(&b).filter(|(x, y)| f(**x, **y)).count();
        prop_assert_eq!(m.tp, count(&|x, y| x && y));
        prop_assert_eq!(m.fp, count(&|x, y| x && !y));
        prop_assert_eq!(m.fn_, count(&|x, y| !x && y));
        prop_assert_eq!(m.tn, count(&|x, y| !x && !y));
        prop_assert!((0.0..=1.0).contains(&m.accuracy));
        let tp = true_positive_rate(&ScoringVector::new(o.clone()), &ScoringVector::new(b.clone()));
        let fp = false_positive_rate(&ScoringVector::new(o), &ScoringVector::new(b));
        prop_assert_eq!(tp.ok(), m.tp_rate);
        prop_assert_eq!(fp.ok(), m.fp_rate);
    }
}

#[test]
fn grouping_score_matches_sum_of_clusters() {
    let a = Cluster::new(vec![
        WordVector::new("a", vec![1.0, 0.0]),
        WordVector::new("b", vec![0.0, 1.0]),
    ]);
    let c = Cluster::new(vec![WordVector::new("c", vec![-1.0, 0.0])]);
    let g = Grouping::new(vec![a, c]).unwrap();
    assert!((g.score - (std::f64::consts::FRAC_1_SQRT_2 + 1.0)).abs() < 1e-12);
}
