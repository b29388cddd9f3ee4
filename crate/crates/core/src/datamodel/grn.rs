use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Activate,
    Inhibit,
}

/// How the Hill terms of a gene's regulators are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum Combination {
    /// Minimum over regulator terms.
    #[default]
    And,
    /// Maximum over regulator terms.
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub sign: Sign,
}

/// Kinetic rule of one gene. Regulator sets are derived from the edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneKinetics {
    pub activators: Vec<usize>,
    pub inhibitors: Vec<usize>,
    pub combination: Combination,
    pub hill_n: f64,
    pub half_saturation: f64,
    pub max_rate: f64,
    pub decay: f64,
}

/// Ground-truth regulatory network plus the kinetics used to simulate it.
#[derive(Debug, Clone, PartialEq)]
pub struct GrnDefinition {
    gene_names: Vec<String>,
    edges: Vec<Edge>,
    kinetics: Vec<GeneKinetics>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    source: String,
    target: String,
    sign: Sign,
}

fn default_hill_n() -> f64 {
    2.0
}
fn default_half_saturation() -> f64 {
    0.5
}
fn default_rate() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
struct KineticsRecord {
    gene: String,
    #[serde(default)]
    combination: Combination,
    #[serde(default = "default_hill_n")]
    hill_n: f64,
    #[serde(default = "default_half_saturation")]
    half_saturation: f64,
    #[serde(default = "default_rate")]
    max_rate: f64,
    #[serde(default = "default_rate")]
    decay: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct GrnFile {
    genes: Vec<String>,
    edges: Vec<EdgeRecord>,
    #[serde(default)]
    kinetics: Vec<KineticsRecord>,
}

const MCAD_LIKE: &str = include_str!("../../networks/mcad_like.json");
const VSC_LIKE: &str = include_str!("../../networks/vsc_like.json");

/// Names accepted by [`GrnDefinition::builtin`].
pub const BUILTIN_NETWORKS: [&str; 2] = ["mcad-like", "vsc-like"];

impl GrnDefinition {
    /// Builds a network where every gene uses default kinetics.
    pub fn new(gene_names: Vec<String>, edges: Vec<(usize, usize, Sign)>) -> Result<Self> {
        let g = gene_names.len();
        let rules = vec![(Combination::And, 2.0, 0.5, 1.0, 1.0); g];
        Self::with_kinetics(gene_names, edges, rules)
    }

    /// `rules[r]` is `(combination, hill_n, half_saturation, max_rate, decay)` for gene `r`.
    pub fn with_kinetics(
        gene_names: Vec<String>,
        edges: Vec<(usize, usize, Sign)>,
        rules: Vec<(Combination, f64, f64, f64, f64)>,
    ) -> Result<Self> {
        let g = gene_names.len();
        if g == 0 {
            return Err(invalid!("network has no genes"));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &gene_names {
            if !seen.insert(name.as_str()) {
                return Err(invalid!("duplicate gene name {name:?}"));
            }
        }
        if rules.len() != g {
            return Err(invalid!("{} kinetic rules for {g} genes", rules.len()));
        }
        let mut edge_list = Vec::with_capacity(edges.len());
        let mut pairs = std::collections::HashSet::new();
        for (source, target, sign) in edges {
            if source >= g || target >= g {
                return Err(invalid!("edge endpoint out of range: {source} -> {target}"));
            }
            if source == target {
                return Err(invalid!("self-loop on gene {:?}", gene_names[source]));
            }
            if !pairs.insert((source, target)) {
                return Err(invalid!(
                    "duplicate edge {:?} -> {:?}",
                    gene_names[source],
                    gene_names[target]
                ));
            }
            edge_list.push(Edge {
                source,
                target,
                sign,
            });
        }
        let mut kinetics = Vec::with_capacity(g);
        for (r, (combination, hill_n, half_saturation, max_rate, decay)) in
            rules.into_iter().enumerate()
        {
            if !(hill_n >= 1.0 && half_saturation > 0.0 && max_rate >= 0.0 && decay >= 0.0)
                || ![hill_n, half_saturation, max_rate, decay]
                    .iter()
                    .all(|v| v.is_finite())
            {
                return Err(invalid!(
                    "bad kinetics for {:?}: need n >= 1, K > 0, m >= 0, decay >= 0",
                    gene_names[r]
                ));
            }
            let regulators = |sign| {
                edge_list
                    .iter()
                    .filter(|e| e.target == r && e.sign == sign)
                    .map(|e| e.source)
                    .collect::<Vec<_>>()
            };
            kinetics.push(GeneKinetics {
                activators: regulators(Sign::Activate),
                inhibitors: regulators(Sign::Inhibit),
                combination,
                hill_n,
                half_saturation,
                max_rate,
                decay,
            });
        }
        Ok(Self {
            gene_names,
            edges: edge_list,
            kinetics,
        })
    }

    /// One of the bundled stand-in networks, `"mcad-like"` (5 genes) or `"vsc-like"` (8 genes).
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "mcad-like" => MCAD_LIKE,
            "vsc-like" => VSC_LIKE,
            other => return Err(invalid!("unknown built-in network {other:?}")),
        };
        Self::from_json_str(text, Path::new(name))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }

    pub fn is_builtin(name: &str) -> bool {
        BUILTIN_NETWORKS.contains(&name)
    }

    /// Loads a bundled network by name, or a JSON file otherwise.
    pub fn load_or_builtin(spec: &str) -> Result<Self> {
        if Self::is_builtin(spec) {
            Self::builtin(spec)
        } else {
            Self::load(Path::new(spec))
        }
    }

    fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let file: GrnFile = serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
        let index = |name: &str| {
            file.genes
                .iter()
                .position(|g| g == name)
                .ok_or_else(|| invalid!("edge endpoint {name:?} is not a named gene"))
        };
        let edges = file
            .edges
            .iter()
            .map(|e| Ok((index(&e.source)?, index(&e.target)?, e.sign)))
            .collect::<Result<Vec<_>>>()?;
        let mut rules = vec![(Combination::And, 2.0, 0.5, 1.0, 1.0); file.genes.len()];
        for k in &file.kinetics {
            let r = file
                .genes
                .iter()
                .position(|g| *g == k.gene)
                .ok_or_else(|| invalid!("kinetics for unknown gene {:?}", k.gene))?;
            rules[r] = (
                k.combination,
                k.hill_n,
                k.half_saturation,
                k.max_rate,
                k.decay,
            );
        }
        Self::with_kinetics(file.genes.clone(), edges, rules)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file()).expect("grn serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn to_file(&self) -> GrnFile {
        GrnFile {
            genes: self.gene_names.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    source: self.gene_names[e.source].clone(),
                    target: self.gene_names[e.target].clone(),
                    sign: e.sign,
                })
                .collect(),
            kinetics: self
                .kinetics
                .iter()
                .zip(&self.gene_names)
                .map(|(k, name)| KineticsRecord {
                    gene: name.clone(),
                    combination: k.combination,
                    hill_n: k.hill_n,
                    half_saturation: k.half_saturation,
                    max_rate: k.max_rate,
                    decay: k.decay,
                })
                .collect(),
        }
    }

    pub fn gene_names(&self) -> &[String] {
        &self.gene_names
    }

    pub fn n_genes(&self) -> usize {
        self.gene_names.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn kinetics(&self) -> &[GeneKinetics] {
        &self.kinetics
    }

    /// Unsigned `g × g` adjacency: entry `(r, s)` is 1 iff `r` regulates `s`.
    pub fn adjacency_matrix(&self) -> Array2<u8> {
        let g = self.n_genes();
        let mut adj = Array2::zeros((g, g));
        for e in &self.edges {
            adj[[e.source, e.target]] = 1;
        }
        adj
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("G{i}")).collect()
    }

    #[test]
    fn no_edges_gives_zero_matrix() {
        let grn = GrnDefinition::new(names(4), vec![]).unwrap();
        assert!(grn.adjacency_matrix().iter().all(|&v| v == 0));
    }

    #[test]
    fn single_edge() {
        let grn = GrnDefinition::new(names(2), vec![(0, 1, Sign::Activate)]).unwrap();
        assert_eq!(grn.adjacency_matrix(), ndarray::arr2(&[[0u8, 1], [0, 0]]));
    }

    #[test]
    fn seven_signed_edges_give_seven_ones() {
        let edges = vec![
            (0, 1, Sign::Activate),
            (1, 0, Sign::Inhibit),
            (1, 2, Sign::Activate),
            (2, 3, Sign::Inhibit),
            (3, 4, Sign::Activate),
            (4, 0, Sign::Inhibit),
            (0, 3, Sign::Activate),
        ];
        let grn = GrnDefinition::new(names(5), edges.clone()).unwrap();
        let adj = grn.adjacency_matrix();
        let ones = adj.iter().filter(|&&v| v == 1).count();
        assert_eq!(ones, edges.len());
        for (s, t, _) in edges {
            assert_eq!(adj[[s, t]], 1);
        }
        for r in 0..5 {
            assert_eq!(adj[[r, r]], 0);
        }
    }

    #[test]
    fn adjacency_ignores_sign() {
        let a = GrnDefinition::new(
            names(3),
            vec![(0, 1, Sign::Activate), (2, 1, Sign::Inhibit)],
        )
        .unwrap();
        let b = GrnDefinition::new(
            names(3),
            vec![(0, 1, Sign::Inhibit), (2, 1, Sign::Activate)],
        )
        .unwrap();
        assert_eq!(a.adjacency_matrix(), b.adjacency_matrix());
    }

    #[test]
    fn rejects_self_loops_and_unknown_genes() {
        assert!(GrnDefinition::new(names(2), vec![(1, 1, Sign::Activate)]).is_err());
        assert!(GrnDefinition::new(names(2), vec![(0, 2, Sign::Activate)]).is_err());
        let bad = r#"{"genes":["A","B"],"edges":[{"source":"A","target":"C","sign":"activate"}]}"#;
        assert!(GrnDefinition::from_json_str(bad, Path::new("x")).is_err());
    }

    #[test]
    fn regulator_sets_follow_edges() {
        let grn = GrnDefinition::new(
            names(3),
            vec![(0, 2, Sign::Activate), (1, 2, Sign::Inhibit)],
        )
        .unwrap();
        assert_eq!(grn.kinetics()[2].activators, vec![0]);
        assert_eq!(grn.kinetics()[2].inhibitors, vec![1]);
        assert!(grn.kinetics()[0].activators.is_empty());
    }

    #[test]
    fn builtins_have_paper_sizes() {
        assert_eq!(GrnDefinition::builtin("mcad-like").unwrap().n_genes(), 5);
        assert_eq!(GrnDefinition::builtin("vsc-like").unwrap().n_genes(), 8);
    }

    #[test]
    fn json_round_trip() {
        let grn = GrnDefinition::builtin("vsc-like").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grn.json");
        grn.save(&path).unwrap();
        assert_eq!(GrnDefinition::load(&path).unwrap(), grn);
    }
}
