//! Typed-entity search over SPARQL, with the type-relaxation schedule used
//! for distractor candidates.

use super::linking::LinkedEntity;
use super::{Candidate, LexicalError};
use crate::domain::SourceTier;
use crate::lexical::embeddings::sample_without_replacement;
use rand::Rng;
use std::collections::BTreeMap;
use std::collections::HashSet;

/// Per-query result cap; larger result sets are sampled down.
pub const SPARQL_RESULT_CAP: usize = 200;

/// Answers "which entities carry all of these types?" queries.
pub trait SparqlClient: Send + Sync {
    /// English labels of entities typed with every IRI in `types`.
    fn entities_with_types(
        &self,
        types: &[String],
        limit: usize,
    ) -> Result<Vec<String>, LexicalError>;
}

/// HTTP GET client for a SPARQL endpoint (query parameter, JSON results).
pub struct HttpSparqlClient {
    agent: ureq::Agent,
    endpoint: String,
}

impl HttpSparqlClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(60))
                .build(),
            endpoint: endpoint.into(),
        }
    }

    fn build_query(types: &[String], limit: usize) -> String {
        let mut clauses = String::new();
        for iri in types {
            let iri = expand_type_iri(iri);
            clauses.push_str(&format!("?entity rdf:type <{iri}> . "));
        }
        format!(
            "PREFIX rdf: <http://www.w3.org/1999/02/22-rdf-syntax-ns#> \
             PREFIX rdfs: <http://www.w3.org/2000/01/rdf-schema#> \
             SELECT DISTINCT ?label WHERE {{ {clauses}?entity rdfs:label ?label . \
             FILTER (lang(?label) = \"en\") }} LIMIT {limit}"
        )
    }
}

/// Expands the compact "DBpedia:X" / "dbo:X" forms the annotator returns
/// into full ontology IRIs; full IRIs pass through.
fn expand_type_iri(iri: &str) -> String {
    if iri.starts_with("http://") || iri.starts_with("https://") {
        return iri.to_string();
    }
    for prefix in ["DBpedia:", "dbo:"] {
        if let Some(local) = iri.strip_prefix(prefix) {
            return format!("http://dbpedia.org/ontology/{local}");
        }
    }
    iri.to_string()
}

impl SparqlClient for HttpSparqlClient {
    fn entities_with_types(
        &self,
        types: &[String],
        limit: usize,
    ) -> Result<Vec<String>, LexicalError> {
        let query = Self::build_query(types, limit);
        let response = self
            .agent
            .get(&self.endpoint)
            .query("query", &query)
            .query("format", "application/sparql-results+json")
            .set("Accept", "application/sparql-results+json")
            .call()
            .map_err(|e| LexicalError::Transport {
                message: e.to_string(),
            })?;
        let value: serde_json::Value =
            response.into_json().map_err(|e| LexicalError::Transport {
                message: e.to_string(),
            })?;
        let bindings = value["results"]["bindings"]
            .as_array()
            .cloned()
            .unwrap_or_default();
        Ok(bindings
            .iter()
            .filter_map(|b| b["label"]["value"].as_str().map(str::to_string))
            .collect())
    }
}

/// In-memory stub keyed by the exact required-type list; test fixtures and
/// offline runs use it in place of a live endpoint.
#[derive(Debug, Default)]
pub struct StubSparqlClient {
    by_types: BTreeMap<Vec<String>, Vec<String>>,
}

impl StubSparqlClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_result(mut self, types: &[&str], labels: &[&str]) -> Self {
        self.by_types.insert(
            types.iter().map(|t| t.to_string()).collect(),
            labels.iter().map(|l| l.to_string()).collect(),
        );
        self
    }
}

impl SparqlClient for StubSparqlClient {
    fn entities_with_types(
        &self,
        types: &[String],
        limit: usize,
    ) -> Result<Vec<String>, LexicalError> {
        Ok(self
            .by_types
            .get(types)
            .map(|labels| labels.iter().take(limit).cloned().collect())
            .unwrap_or_default())
    }
}

/// Typed search with relaxation: start by requiring every type, then drop
/// types from most general to most specific (keeping the most specific
/// suffix) until `num` candidates are collected or the list is exhausted.
/// Over-full query results are sampled down with the seeded generator.
pub fn find_dbpedia_ents<R: Rng>(
    entity: &LinkedEntity,
    num: usize,
    client: &dyn SparqlClient,
    rng: &mut R,
) -> Result<Vec<Candidate>, LexicalError> {
    if num == 0 || entity.dbpedia_types.is_empty() {
        return Ok(Vec::new());
    }
    let mut collected: Vec<Candidate> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(entity.surface.to_lowercase());

    let types = &entity.dbpedia_types;
    for required in (1..=types.len()).rev() {
        let suffix: Vec<String> = types[types.len() - required..].to_vec();
        let labels = client.entities_with_types(&suffix, SPARQL_RESULT_CAP)?;
        let fresh: Vec<String> = labels
            .into_iter()
            .filter(|label| seen.insert(label.to_lowercase()))
            .collect();
        let wanted = num - collected.len();
        let chosen = if fresh.len() > wanted {
            sample_without_replacement(&fresh, wanted, rng)
        } else {
            fresh
        };
        collected.extend(chosen.into_iter().map(|text| Candidate {
            text,
            source_tier: SourceTier::DbpediaTyped,
            score: None,
        }));
        if collected.len() >= num {
            break; // monotone stopping: no weaker query is issued
        }
    }
    Ok(collected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entity(types: &[&str]) -> LinkedEntity {
        LinkedEntity {
            surface: "Kobe".into(),
            char_span: (0, 4),
            dbpedia_uri: "http://dbpedia.org/resource/Kobe".into(),
            dbpedia_types: types.iter().map(|t| t.to_string()).collect(),
        }
    }

    /// Stub that records every query it answers.
    struct Recording {
        inner: StubSparqlClient,
        queries: std::sync::Mutex<Vec<Vec<String>>>,
    }

    impl SparqlClient for Recording {
        fn entities_with_types(
            &self,
            types: &[String],
            limit: usize,
        ) -> Result<Vec<String>, LexicalError> {
            self.queries.lock().unwrap().push(types.to_vec());
            self.inner.entities_with_types(types, limit)
        }
    }

    #[test]
    fn first_query_requires_all_types() {
        let client = Recording {
            inner: StubSparqlClient::new().with_result(
                &["DBpedia:Person", "DBpedia:Athlete", "DBpedia:BasketballPlayer"],
                &["Michael Jordan", "LeBron James"],
            ),
            queries: std::sync::Mutex::new(Vec::new()),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let entity = entity(&["DBpedia:Person", "DBpedia:Athlete", "DBpedia:BasketballPlayer"]);
        let candidates = find_dbpedia_ents(&entity, 2, &client, &mut rng).unwrap();
        assert_eq!(candidates.len(), 2);
        let queries = client.queries.lock().unwrap();
        assert_eq!(
            queries[0],
            vec!["DBpedia:Person", "DBpedia:Athlete", "DBpedia:BasketballPlayer"]
        );
        // Enough results from the strictest query: no relaxation issued.
        assert_eq!(queries.len(), 1);
    }

    #[test]
    fn relaxation_keeps_most_specific_suffix() {
        let client = Recording {
            inner: StubSparqlClient::new()
                .with_result(&["dbo:Person", "dbo:Athlete"], &[])
                .with_result(&["dbo:Athlete"], &["Serena Williams"]),
            queries: std::sync::Mutex::new(Vec::new()),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let entity = entity(&["dbo:Person", "dbo:Athlete"]);
        let candidates = find_dbpedia_ents(&entity, 3, &client, &mut rng).unwrap();
        assert_eq!(candidates.len(), 1);
        assert_eq!(candidates[0].text, "Serena Williams");
        let queries = client.queries.lock().unwrap();
        assert_eq!(queries[1], vec!["dbo:Athlete"]);
    }

    #[test]
    fn empty_endpoint_yields_empty_not_error() {
        let client = StubSparqlClient::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let entity = entity(&["dbo:Person"]);
        assert!(find_dbpedia_ents(&entity, 5, &client, &mut rng)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn paper_example_labels_come_back_as_candidates() {
        let client = StubSparqlClient::new().with_result(
            &["dbo:Person"],
            &["Gopala III", "Mohammad Hatta", "Alexander the Great"],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut entity = entity(&["dbo:Person"]);
        entity.surface = "King Solomon".into();
        let candidates = find_dbpedia_ents(&entity, 3, &client, &mut rng).unwrap();
        let labels: Vec<&str> = candidates.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(labels, vec!["Gopala III", "Mohammad Hatta", "Alexander the Great"]);
        assert!(candidates
            .iter()
            .all(|c| c.source_tier == SourceTier::DbpediaTyped));
    }

    #[test]
    fn own_surface_is_excluded() {
        let client =
            StubSparqlClient::new().with_result(&["dbo:Person"], &["Kobe", "Shaquille O'Neal"]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let entity = entity(&["dbo:Person"]);
        let candidates = find_dbpedia_ents(&entity, 5, &client, &mut rng).unwrap();
        assert_eq!(candidates.len(), 1);
        assert_eq!(candidates[0].text, "Shaquille O'Neal");
    }

    #[test]
    fn sparql_query_shape() {
        let query = HttpSparqlClient::build_query(
            &["DBpedia:Person".to_string(), "dbo:Athlete".to_string()],
            200,
        );
        assert!(query.contains("<http://dbpedia.org/ontology/Person>"));
        assert!(query.contains("<http://dbpedia.org/ontology/Athlete>"));
        assert!(query.contains("LIMIT 200"));
        assert!(query.contains("rdfs:label"));
    }
}
