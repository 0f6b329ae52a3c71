//! Execution-tree recording and DOT export.

use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeNodeKind {
    Root,
    Choice,
    Solution,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub kind: TreeNodeKind,
    pub label: String,
}

/// Nodes in creation order; edges in visit order as `(from, to, label)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecTree {
    pub nodes: Vec<TreeNode>,
    pub edges: Vec<(usize, usize, String)>,
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

impl ExecTree {
    pub fn add_node(&mut self, kind: TreeNodeKind, label: impl Into<String>) -> usize {
        self.nodes.push(TreeNode {
            kind,
            label: label.into(),
        });
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, from: usize, to: usize, label: impl Into<String>) {
        self.edges.push((from, to, label.into()));
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, TreeNodeKind::Solution | TreeNodeKind::Fail))
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph execution {\n  node [fontname=\"monospace\"];\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let shape = match n.kind {
                TreeNodeKind::Root => "circle",
                TreeNodeKind::Choice => "diamond",
                TreeNodeKind::Solution => "box",
                TreeNodeKind::Fail => "octagon",
            };
            let _ = writeln!(out, "  n{i} [shape={shape}, label=\"{}\"];", escape(&n.label));
        }
        for (from, to, label) in &self.edges {
            let _ = writeln!(out, "  n{from} -> n{to} [label=\"{}\"];", escape(label));
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_output() {
        let mut t = ExecTree::default();
        let r = t.add_node(TreeNodeKind::Root, "root");
        let c = t.add_node(TreeNodeKind::Choice, "COND");
        let l = t.add_node(TreeNodeKind::Solution, "RETURN \"x\"");
        t.add_edge(r, c, "");
        t.add_edge(c, l, "TRUE");
        let dot = t.to_dot();
        assert!(dot.starts_with("digraph execution {"));
        assert!(dot.contains("n2 [shape=box, label=\"RETURN \\\"x\\\"\"];"));
        assert!(dot.contains("n1 -> n2 [label=\"TRUE\"];"));
        assert_eq!(t.leaves().count(), 1);
    }
}
