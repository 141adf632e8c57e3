use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::{BipartiteGraph, Edge, EdgeLabel, LabelMode, MIN_DEGREE};
use crate::error::{Error, Result};

/// Reads a `user<TAB>item<TAB>rating` file, buckets ratings into labels and
/// drops low-degree nodes until every remaining node has degree ≥ 3.
pub fn ingest_edge_list(path: &Path, mode: LabelMode) -> Result<BipartiteGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path, mode)
}

/// [`ingest_edge_list`] over in-memory text; `path` is only used in messages.
pub fn parse_edge_list(text: &str, path: &Path, mode: LabelMode) -> Result<BipartiteGraph> {
    let mut raw: Vec<(&str, &str, Option<EdgeLabel>)> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = if trimmed.contains('\t') {
            trimmed.split('\t').map(str::trim).collect()
        } else {
            trimmed.split_whitespace().collect()
        };
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg,
        };
        if fields.len() != 3 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_err(format!(
                "expected 'user<TAB>item<TAB>rating', got '{trimmed}'"
            )));
        }
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(format!("rating '{}' is not a number", fields[2])))?;
        if rating.fract() != 0.0 || !(1.0..=5.0).contains(&rating) {
            return Err(parse_err(format!("rating '{}' outside 1..5", fields[2])));
        }
        raw.push((fields[0], fields[1], mode.label_of_rating(rating as u8)));
    }

    // Last occurrence of a (user, item) pair wins and keeps its position; a
    // final rating the mode drops removes the pair.
    let mut seen = HashSet::new();
    let mut deduped: Vec<(&str, &str, EdgeLabel)> = raw
        .into_iter()
        .rev()
        .filter(|(u, i, _)| seen.insert((*u, *i)))
        .filter_map(|(u, i, l)| l.map(|l| (u, i, l)))
        .collect();
    deduped.reverse();

    let kept = filter_min_degree(deduped);
    if kept.is_empty() {
        return Err(Error::Data(format!(
            "{}: no edges left after removing nodes with degree < {MIN_DEGREE}",
            path.display()
        )));
    }

    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut item_index: HashMap<&str, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut edges = Vec::with_capacity(kept.len());
    for (u, i, label) in kept {
        let ui = *user_index.entry(u).or_insert_with(|| {
            user_ids.push(u.to_string());
            user_ids.len() - 1
        });
        let ii = *item_index.entry(i).or_insert_with(|| {
            item_ids.push(i.to_string());
            item_ids.len() - 1
        });
        edges.push(Edge::new(ui, ii, label));
    }
    BipartiteGraph::with_ids(mode, Arc::new(user_ids), Arc::new(item_ids), edges)
}

/// Removes edges incident to nodes of degree < [`MIN_DEGREE`], repeating until
/// no such node remains.
fn filter_min_degree<'a>(mut edges: Vec<(&'a str, &'a str, EdgeLabel)>) -> Vec<(&'a str, &'a str, EdgeLabel)> {
    loop {
        let mut user_deg: HashMap<&str, usize> = HashMap::new();
        let mut item_deg: HashMap<&str, usize> = HashMap::new();
        for (u, i, _) in &edges {
            *user_deg.entry(u).or_default() += 1;
            *item_deg.entry(i).or_default() += 1;
        }
        let before = edges.len();
        edges.retain(|(u, i, _)| user_deg[u] >= MIN_DEGREE && item_deg[i] >= MIN_DEGREE);
        if edges.len() == before {
            return edges;
        }
    }
}

/// Writes the graph as an ingestable edge list, labels mapped to ratings 1/3/5.
pub fn write_edge_list(graph: &BipartiteGraph, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# users={} items={} edges={}",
        graph.user_count(),
        graph.item_count(),
        graph.edge_count()
    );
    for e in graph.edges() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            graph.user_id(e.user),
            graph.item_id(e.item),
            e.label.representative_rating()
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<BipartiteGraph> {
        parse_edge_list(text, Path::new("mem.tsv"), LabelMode::Multi)
    }

    /// Complete bipartite block between `users` and `items` with one rating.
    fn block(users: &[&str], items: &[&str], rating: u8) -> String {
        let mut s = String::new();
        for u in users {
            for i in items {
                s.push_str(&format!("{u}\t{i}\t{rating}\n"));
            }
        }
        s
    }

    #[test]
    fn buckets_and_comments() {
        let mut text = String::from("# header comment\n\n");
        text.push_str(&block(&["a", "b", "c"], &["x", "y", "z"], 4));
        text = text.replacen("a\tx\t4", "a\tx\t3", 1).replacen("b\ty\t4", "b\ty\t1", 1);
        let g = parse(&text).unwrap();
        assert_eq!(g.edge_count(), 9);
        let counts = g.label_counts();
        assert_eq!(counts[&EdgeLabel::High], 7);
        assert_eq!(counts[&EdgeLabel::Mid], 1);
        assert_eq!(counts[&EdgeLabel::Low], 1);
    }

    #[test]
    fn float_ratings_are_accepted() {
        let text = block(&["a", "b", "c"], &["x", "y", "z"], 5).replace("\t5\n", "\t5.0\n");
        assert_eq!(parse(&text).unwrap().edge_count(), 9);
    }

    #[test]
    fn degree_filter_cascades() {
        // 3x3 core plus user d with edges to x and w only (degree 2), and item
        // w reached by core users a, b and by d. Dropping d leaves w at degree
        // 2, so w goes in the next sweep.
        let mut text = block(&["a", "b", "c"], &["x", "y", "z"], 5);
        text.push_str("d\tx\t5\n");
        text.push_str("a\tw\t5\nb\tw\t5\nd\tw\t5\n");
        let g = parse(&text).unwrap();
        assert_eq!((g.user_count(), g.item_count(), g.edge_count()), (3, 3, 9));
        assert!(g.user_degrees().iter().chain(&g.item_degrees()).all(|&d| d >= 3));
    }

    #[test]
    fn filter_is_noop_when_degrees_suffice() {
        let users: Vec<String> = (0..10).map(|k| format!("u{k}")).collect();
        let mut text = String::new();
        for (k, u) in users.iter().enumerate() {
            for j in 0..3 {
                text.push_str(&format!("{u}\ti{}\t5\n", (k + j) % 5));
            }
        }
        let g = parse(&text).unwrap();
        assert_eq!((g.user_count(), g.item_count(), g.edge_count()), (10, 5, 30));
    }

    #[test]
    fn duplicates_keep_last() {
        let mut text = block(&["a", "b", "c"], &["x", "y", "z"], 5);
        text.push_str("a\tx\t1\n");
        let g = parse(&text).unwrap();
        assert_eq!(g.edge_count(), 9);
        assert_eq!(g.label_counts()[&EdgeLabel::Low], 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("a\tb\t5\nbroken line\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("a\tb\t7\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_after_filter_is_data_error() {
        assert!(matches!(parse("a\tb\t5\n"), Err(Error::Data(_))));
    }

    #[test]
    fn binary_mode_drops_mid() {
        let text = block(&["a", "b", "c"], &["x", "y", "z"], 5).replacen("a\tx\t5", "a\tx\t3", 1);
        let g = parse_edge_list(&text, Path::new("m"), LabelMode::Binary);
        // Dropping a-x leaves a and x at degree 2, which cascades through the
        // whole block.
        assert!(matches!(g, Err(Error::Data(_))));
    }

    #[test]
    fn dropped_last_rating_removes_the_pair() {
        let mut text = block(&["a", "b", "c", "d"], &["x", "y", "z"], 5);
        text.push_str("a\tx\t3\n");
        let g = parse_edge_list(&text, Path::new("m"), LabelMode::Binary).unwrap();
        // a falls to degree 2 and leaves; x keeps b, c and d.
        assert_eq!((g.user_count(), g.item_count(), g.edge_count()), (3, 3, 9));
    }
}
