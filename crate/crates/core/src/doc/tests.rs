use super::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The example tree used throughout: s1 (with children s1.1 and s1.2),
/// s1.1 with child s1.1.1, s1.1.1 with child s1.1.1.1.
pub(crate) fn example_tree() -> StructureTree {
    let json = r#"{
        "title": "example report",
        "front": ["overview paragraph before any section."],
        "sections": [
            {
                "title": "section one",
                "paragraphs": ["first section text."],
                "subsections": [
                    {
                        "title": "section one one",
                        "paragraphs": ["nested text."],
                        "subsections": [
                            {
                                "title": "section one one one",
                                "paragraphs": [],
                                "subsections": [
                                    {"title": "section one one one one", "paragraphs": ["deep text."]}
                                ]
                            }
                        ]
                    },
                    {"title": "section one two", "paragraphs": ["second child text."]}
                ]
            }
        ]
    }"#;
    let record = DocumentRecord::from_json(json).unwrap();
    StructureTree::from_record(&record)
}

/// Ids in `example_tree`: 0 root, 1 = s1, 2 = s1.1, 3 = s1.1.1,
/// 4 = s1.1.1.1, 5 = s1.2.
const S1: usize = 1;
const S1_1: usize = 2;
const S1_1_1: usize = 3;
const S1_1_1_1: usize = 4;
const S1_2: usize = 5;

/// Independent oracle: undirected BFS distance over explicit adjacency.
pub(crate) fn bfs_distance(tree: &StructureTree, src: usize, dst: usize) -> usize {
    let n = tree.num_sections();
    let mut adj = vec![Vec::new(); n];
    for node in tree.nodes() {
        if let Some(p) = node.parent {
            adj[p].push(node.id);
            adj[node.id].push(p);
        }
    }
    let mut dist = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    dist[src] = 0;
    queue.push_back(src);
    while let Some(u) = queue.pop_front() {
        if u == dst {
            return dist[u];
        }
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    unreachable!("tree is connected");
}

/// Independent depth computation by walking parents.
fn walk_depth(tree: &StructureTree, mut id: usize) -> usize {
    let mut depth = 0;
    while let Some(p) = tree.nodes()[id].parent {
        depth += 1;
        id = p;
    }
    depth
}

#[test]
fn parses_flat_document() {
    let json = r#"{"title": "t", "sections": [
        {"title": "one", "subsections": [{"title": "one one"}, {"title": "one two"}]},
        {"title": "two"}
    ]}"#;
    let tree = StructureTree::from_record(&DocumentRecord::from_json(json).unwrap());
    assert_eq!(tree.num_sections(), 5);
    let levels: Vec<usize> = tree.nodes().iter().map(|n| n.level).collect();
    assert_eq!(levels, vec![0, 1, 2, 2, 1]);
    let ids: Vec<usize> = tree.nodes().iter().map(|n| n.id).collect();
    assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    tree.validate().unwrap();
}

#[test]
fn parses_empty_document_with_front_matter() {
    let json = r#"{"title": "only title", "front": ["a single leading paragraph."]}"#;
    let tree = StructureTree::from_record(&DocumentRecord::from_json(json).unwrap());
    assert_eq!(tree.num_sections(), 1);
    assert_eq!(tree.nodes()[0].token_span, 0..tree.num_tokens());
    assert!(tree.num_tokens() > 0);
}

#[test]
fn example_tree_levels() {
    let tree = example_tree();
    let levels: Vec<usize> = tree.nodes().iter().map(|n| n.level).collect();
    assert_eq!(levels, vec![0, 1, 2, 3, 4, 2]);
    tree.validate().unwrap();
}

#[test]
fn parse_error_paths() {
    let err = DocumentRecord::from_json(r#"{"front": []}"#).unwrap_err();
    assert!(err.to_string().contains("document.title"), "{err}");

    let err =
        DocumentRecord::from_json(r#"{"title": "t", "sections": [{"paragraphs": []}]}"#).unwrap_err();
    assert!(err.to_string().contains("sections[0].title"), "{err}");

    let err = DocumentRecord::from_json(
        r#"{"title": "t", "sections": [{"title": "s", "subsections": 3}]}"#,
    )
    .unwrap_err();
    assert!(err.to_string().contains("sections[0].subsections"), "{err}");
}

#[test]
fn figure_positions() {
    let tree = example_tree();
    // s1 -> s1.2 is (1, -1); looking back flips both signs.
    assert_eq!(
        tree.tree_position(S1, S1_2).unwrap(),
        TreePosition { path_len: 1, lvl_diff: -1 }
    );
    assert_eq!(
        tree.tree_position(S1_2, S1).unwrap(),
        TreePosition { path_len: -1, lvl_diff: 1 }
    );
    // Self position.
    for id in 0..tree.num_sections() {
        assert_eq!(
            tree.tree_position(id, id).unwrap(),
            TreePosition { path_len: 0, lvl_diff: 0 }
        );
    }
    // Siblings and a grandchild, checked against the BFS oracle.
    assert_eq!(
        tree.tree_position(S1_1, S1_2).unwrap(),
        TreePosition { path_len: 2, lvl_diff: 0 }
    );
    assert_eq!(
        tree.tree_position(S1_1_1, S1).unwrap(),
        TreePosition { path_len: -2, lvl_diff: 2 }
    );
    assert_eq!(bfs_distance(&tree, S1_1, S1_2), 2);
}

#[test]
fn token_positions_follow_owners() {
    let tree = example_tree();
    let span1 = tree.nodes()[S1].token_span.clone();
    let span12 = tree.nodes()[S1_2].token_span.clone();
    let pos = tree.token_position(span1.start, span12.start).unwrap();
    assert_eq!(pos, TreePosition { path_len: 1, lvl_diff: -1 });
    // Same section.
    let pos = tree.token_position(span1.start, span1.end - 1).unwrap();
    assert_eq!(pos, TreePosition { path_len: 0, lvl_diff: 0 });
    // Front matter (virtual root) to s1: the root is s1's parent.
    let pos = tree.token_position(0, span1.start).unwrap();
    assert_eq!(pos, TreePosition { path_len: 1, lvl_diff: -1 });
    // Out of range.
    assert!(tree.token_position(0, tree.num_tokens()).is_err());
}

#[test]
fn unknown_ids_error() {
    let tree = example_tree();
    assert!(tree.tree_position(0, 99).is_err());
    assert!(tree.classify_relation(99, 0).is_err());
}

#[test]
fn relation_classification() {
    let tree = example_tree();
    assert_eq!(tree.classify_relation(S1, S1_1).unwrap(), RelationKind::ParentOf);
    assert_eq!(tree.classify_relation(S1_1, S1).unwrap(), RelationKind::ChildOf);
    assert_eq!(tree.classify_relation(S1, S1).unwrap(), RelationKind::SelfSection);
    assert_eq!(tree.classify_relation(S1, S1_1_1).unwrap(), RelationKind::AncestorOf);
    assert_eq!(tree.classify_relation(S1_1, S1_2).unwrap(), RelationKind::SiblingBefore);
    assert_eq!(tree.classify_relation(S1_2, S1_1).unwrap(), RelationKind::SiblingAfter);
    // s1.1.1 and s1.2 are both inside s1 and nothing more specific applies
    // (their ids are not adjacent in this tree: 3 and 5).
    assert_eq!(tree.classify_relation(S1_1_1, S1_2).unwrap(), RelationKind::SameTopLevel);
    // s1.1.1.1 (id 4) and s1.2 (id 5) are adjacent in text order.
    assert_eq!(tree.classify_relation(S1_1_1_1, S1_2).unwrap(), RelationKind::NeighborBefore);
}

#[test]
fn relation_stats_sum_to_n_squared() {
    let tree = example_tree();
    let stats = tree.relation_stats(true).unwrap();
    let n = tree.num_sections() as u64;
    assert_eq!(stats.section_total(), n * n);
    let frac_sum: f64 = RelationKind::ALL
        .iter()
        .map(|k| stats.section_fraction(*k))
        .sum();
    assert!((frac_sum - 1.0).abs() < 1e-12);
    let tok_n = tree.num_tokens() as u64;
    assert_eq!(stats.token_total(), tok_n * tok_n);

    // Histogram matches exhaustive enumeration.
    for (kind, count) in &stats.section_pairs {
        let mut expect = 0;
        for a in 0..tree.num_sections() {
            for b in 0..tree.num_sections() {
                if tree.classify_relation(a, b).unwrap() == *kind {
                    expect += 1;
                }
            }
        }
        assert_eq!(*count, expect, "count mismatch for {kind:?}");
    }
}

#[test]
fn single_section_stats() {
    let json = r#"{"title": "t", "sections": [{"title": "only"}]}"#;
    let tree = StructureTree::from_record(&DocumentRecord::from_json(json).unwrap());
    let stats = tree.relation_stats(false).unwrap();
    assert_eq!(stats.section_total(), 1);
    assert!((stats.section_fraction(RelationKind::SelfSection) - 1.0).abs() < 1e-12);
}

#[test]
fn section_markers() {
    let json = r#"{"title": "t", "sections": [
        {"title": "one", "subsections": [{"title": "one one"}]},
        {"title": "two"}
    ]}"#;
    let tree = StructureTree::from_record(&DocumentRecord::from_json(json).unwrap());

    let uniform = tree.insert_section_tokens(MarkerMode::Uniform);
    let markers: Vec<&String> = uniform.tokens().iter().filter(|t| *t == "[SEC]").collect();
    assert_eq!(markers.len(), 3);
    uniform.validate().unwrap();
    assert_eq!(uniform.num_tokens(), tree.num_tokens() + 3);

    let leveled = tree.insert_section_tokens(MarkerMode::Leveled);
    assert!(leveled.tokens().contains(&"[SEC-L1]".to_string()));
    assert!(leveled.tokens().contains(&"[SEC-L2]".to_string()));
    leveled.validate().unwrap();

    // Marker belongs to its section: the first token of s1's new span.
    let span = leveled.nodes()[1].token_span.clone();
    assert_eq!(leveled.tokens()[span.start], "[SEC-L1]");
    assert_eq!(leveled.token_owner(span.start).unwrap(), 1);

    // Root-only tree is unchanged.
    let bare = StructureTree::from_record(
        &DocumentRecord::from_json(r#"{"title": "t", "front": ["p."]}"#).unwrap(),
    );
    let marked = bare.insert_section_tokens(MarkerMode::Uniform);
    assert_eq!(marked.tokens(), bare.tokens());
}

#[test]
fn prefix_tokens_belong_to_root() {
    let tree = example_tree();
    let prefix = vec!["what".to_string(), "happened".to_string(), "?".to_string()];
    let prefixed = tree.with_prefix_tokens(&prefix);
    prefixed.validate().unwrap();
    assert_eq!(prefixed.num_tokens(), tree.num_tokens() + 3);
    assert_eq!(prefixed.token_owner(0).unwrap(), 0);
    assert_eq!(prefixed.token_owner(2).unwrap(), 0);
    // Positions between shifted tokens are unchanged.
    let a = tree.nodes()[S1].token_span.start;
    let b = tree.nodes()[S1_2].token_span.start;
    assert_eq!(
        prefixed.token_position(a + 3, b + 3).unwrap(),
        tree.token_position(a, b).unwrap()
    );
}

fn random_tree(seed: u64, max_sections: usize) -> StructureTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let doc = synth::random_document(&mut rng, max_sections, 5);
    StructureTree::from_record(&doc)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn antisymmetry_and_oracle(seed in 0u64..1000) {
        let tree = random_tree(seed, 20);
        let n = tree.num_sections();
        for a in 0..n {
            for b in 0..n {
                let fwd = tree.tree_position(a, b).unwrap();
                let bwd = tree.tree_position(b, a).unwrap();
                prop_assert_eq!(fwd.path_len, -bwd.path_len);
                prop_assert_eq!(fwd.lvl_diff, -bwd.lvl_diff);
                prop_assert_eq!(fwd.path_len.unsigned_abs() as usize, bfs_distance(&tree, a, b));
                prop_assert_eq!(
                    fwd.lvl_diff,
                    walk_depth(&tree, a) as i64 - walk_depth(&tree, b) as i64
                );
                prop_assert!(fwd.lvl_diff.abs() <= fwd.path_len.abs());
                if a != b {
                    prop_assert_eq!(fwd.path_len > 0, a < b);
                }
            }
        }
    }

    #[test]
    fn relations_mirror(seed in 0u64..1000) {
        let tree = random_tree(seed, 16);
        let n = tree.num_sections();
        for a in 0..n {
            for b in 0..n {
                let fwd = tree.classify_relation(a, b).unwrap();
                let bwd = tree.classify_relation(b, a).unwrap();
                prop_assert_eq!(fwd.mirrored(), bwd);
            }
        }
    }

    #[test]
    fn random_trees_validate(seed in 0u64..1000) {
        let tree = random_tree(seed, 24);
        prop_assert!(tree.validate().is_ok());
        let marked = tree.insert_section_tokens(MarkerMode::Leveled);
        prop_assert!(marked.validate().is_ok());
    }
}
