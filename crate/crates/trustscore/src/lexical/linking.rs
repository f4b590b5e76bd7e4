//! Entity linking: a remote annotator client and an offline gazetteer.

use super::tagger::Tagger;
use super::LexicalError;
use std::path::Path;

/// An entity mention resolved to a knowledge-base URI with its type chain,
/// most general type first.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkedEntity {
    pub surface: String,
    pub char_span: (usize, usize),
    pub dbpedia_uri: String,
    pub dbpedia_types: Vec<String>,
}

/// Finds knowledge-base entities in text. Implementations must return
/// non-overlapping spans.
pub trait EntityLinker: Send + Sync {
    fn link(&self, text: &str) -> Result<Vec<LinkedEntity>, LexicalError>;
}

/// A linker that never finds anything; used when no resource is configured.
pub struct NullLinker;

impl EntityLinker for NullLinker {
    fn link(&self, _text: &str) -> Result<Vec<LinkedEntity>, LexicalError> {
        Ok(Vec::new())
    }
}

struct GazetteerEntry {
    tokens: Vec<String>,
    uri: String,
    types: Vec<String>,
}

/// Offline lookup over a TSV of `surface<TAB>uri<TAB>type1|type2|...`
/// lines, matched longest-first over the token sequence so "New York City"
/// beats "New York".
pub struct GazetteerLinker {
    entries: Vec<GazetteerEntry>,
    tagger: Tagger,
}

impl std::fmt::Debug for GazetteerLinker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GazetteerLinker")
            .field("entries", &self.entries.len())
            .finish()
    }
}

impl GazetteerLinker {
    pub fn from_path(path: &Path) -> Result<Self, LexicalError> {
        let raw = std::fs::read_to_string(path).map_err(|e| LexicalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_tsv(&raw)
    }

    pub fn from_tsv(raw: &str) -> Result<Self, LexicalError> {
        let mut entries = Vec::new();
        for (index, line) in raw.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (surface, uri, types) = match (fields.next(), fields.next(), fields.next()) {
                (Some(s), Some(u), Some(t)) if !s.is_empty() && !t.is_empty() => (s, u, t),
                _ => {
                    return Err(LexicalError::MalformedGazetteer {
                        line: index + 1,
                        message: format!("expected surface<TAB>uri<TAB>types, got {line:?}"),
                    })
                }
            };
            let types: Vec<String> = types
                .split('|')
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect();
            if types.is_empty() {
                return Err(LexicalError::MalformedGazetteer {
                    line: index + 1,
                    message: "entry has no types".to_string(),
                });
            }
            entries.push(GazetteerEntry {
                tokens: surface
                    .split_whitespace()
                    .map(|t| t.to_lowercase())
                    .collect(),
                uri: uri.to_string(),
                types,
            });
        }
        // Longest surfaces first so greedy matching prefers them.
        entries.sort_by(|a, b| b.tokens.len().cmp(&a.tokens.len()));
        Ok(Self {
            entries,
            tagger: Tagger::new(),
        })
    }
}

impl EntityLinker for GazetteerLinker {
    fn link(&self, text: &str) -> Result<Vec<LinkedEntity>, LexicalError> {
        let tokens = self.tagger.tokenize_and_tag(text);
        let lowered: Vec<String> = tokens.iter().map(|t| t.surface.to_lowercase()).collect();
        let mut found = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut matched = None;
            for entry in &self.entries {
                let n = entry.tokens.len();
                if n == 0 || i + n > tokens.len() {
                    continue;
                }
                if lowered[i..i + n] == entry.tokens[..] {
                    matched = Some((n, entry));
                    break;
                }
            }
            if let Some((n, entry)) = matched {
                let start = tokens[i].char_span.0;
                let end = tokens[i + n - 1].char_span.1;
                found.push(LinkedEntity {
                    surface: text[start..end].to_string(),
                    char_span: (start, end),
                    dbpedia_uri: entry.uri.clone(),
                    dbpedia_types: entry.types.clone(),
                });
                i += n;
            } else {
                i += 1;
            }
        }
        Ok(found)
    }
}

/// Client for an annotate-style REST endpoint
/// (`GET {base}/annotate?text=...&confidence=...`, JSON reply).
pub struct SpotlightLinker {
    agent: ureq::Agent,
    base_url: String,
    confidence: f64,
}

impl SpotlightLinker {
    pub fn new(base_url: impl Into<String>, confidence: f64) -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(30))
                .build(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            confidence,
        }
    }
}

impl EntityLinker for SpotlightLinker {
    fn link(&self, text: &str) -> Result<Vec<LinkedEntity>, LexicalError> {
        let url = format!("{}/annotate", self.base_url);
        let response = self
            .agent
            .get(&url)
            .query("text", text)
            .query("confidence", &self.confidence.to_string())
            .set("Accept", "application/json")
            .call()
            .map_err(|e| LexicalError::Transport {
                message: e.to_string(),
            })?;
        let value: serde_json::Value =
            response.into_json().map_err(|e| LexicalError::Transport {
                message: e.to_string(),
            })?;

        let resources = value
            .get("Resources")
            .or_else(|| value.get("resources"))
            .and_then(|r| r.as_array())
            .cloned()
            .unwrap_or_default();

        let field = |obj: &serde_json::Value, name: &str| -> Option<String> {
            obj.get(format!("@{name}"))
                .or_else(|| obj.get(name))
                .and_then(|v| v.as_str())
                .map(str::to_string)
        };

        let mut entities = Vec::new();
        for resource in resources {
            let Some(surface) = field(&resource, "surfaceForm") else {
                continue;
            };
            let Some(uri) = field(&resource, "URI") else {
                continue;
            };
            let types: Vec<String> = field(&resource, "types")
                .map(|t| {
                    t.split(',')
                        .map(str::trim)
                        .filter(|t| !t.is_empty())
                        .map(str::to_string)
                        .collect()
                })
                .unwrap_or_default();
            if types.is_empty() {
                continue; // untyped mentions cannot drive typed search
            }
            let offset = field(&resource, "offset")
                .and_then(|o| o.parse::<usize>().ok())
                .or_else(|| text.find(&surface));
            let Some(start) = offset else { continue };
            let end = start + surface.len();
            if end > text.len() {
                continue;
            }
            entities.push(LinkedEntity {
                surface,
                char_span: (start, end),
                dbpedia_uri: uri,
                dbpedia_types: types,
            });
        }
        // Keep the earliest of any overlapping pair.
        entities.sort_by_key(|e| (e.char_span.0, usize::MAX - e.char_span.1));
        let mut non_overlapping: Vec<LinkedEntity> = Vec::new();
        for entity in entities {
            if non_overlapping
                .last()
                .is_none_or(|prev| prev.char_span.1 <= entity.char_span.0)
            {
                non_overlapping.push(entity);
            }
        }
        Ok(non_overlapping)
    }
}
