//! Declarative attribute mapping: which JSON paths feed which output
//! columns, with what type, for which entity.
//!
//! The mapping file is the single configuration artifact that drives
//! extraction and cleaning: adding an attribute to the pipeline means adding
//! one line here. Format: UTF-8, `;`-separated, header
//! `name;paths;output_type;entity;role`, `#` comment lines ignored, multiple
//! fallback paths in the `paths` cell separated by `|`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MappingError {
    #[error("line {line}: expected 5 `;`-separated columns, found {found}")]
    WrongColumnCount { line: usize, found: usize },
    #[error("line {line}: {source}")]
    BadPath { line: usize, source: PathError },
    #[error("line {line}: unknown {what} {token:?}")]
    UnknownToken {
        line: usize,
        what: &'static str,
        token: String,
    },
    #[error("missing header line `{HEADER}`")]
    MissingHeader,
    #[error("first line must be exactly `{HEADER}`, found {found:?}")]
    BadHeader { found: String },
    #[error("mapping defines no GATs")]
    NoGats,
    #[error("duplicate GAT name {name:?}")]
    DuplicateName { name: String },
    #[error("GAT name must be non-empty (line {line})")]
    EmptyName { line: usize },
    #[error("GAT {name:?} has no paths")]
    NoPaths { name: String },
    #[error("expected exactly one GAT with role=bill_date (entity=bill, type=date), found {found}")]
    BillDateCount { found: usize },
    #[error("bill_date GAT {name:?} must have entity=bill and output_type=date")]
    BillDateShape { name: String },
    #[error("expected exactly one GAT with entity={entity} role=identifier, found {found}")]
    IdentifierCount { entity: Entity, found: usize },
    #[error("at most one GAT may have role=age, found {found}")]
    AgeCount { found: usize },
    #[error("age GAT {name:?} must have entity=user and output_type=integer")]
    AgeShape { name: String },
    #[error("at most one GAT may have role=offer, found {found}")]
    OfferCount { found: usize },
    #[error("offer GAT {name:?} must have entity=bill")]
    OfferShape { name: String },
    #[error("identifier GAT {name:?} must not have entity=bill")]
    BillIdentifier { name: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("empty path")]
    Empty,
    #[error("empty segment in path {path:?}")]
    EmptySegment { path: String },
    #[error("unclosed bracket in path {path:?}")]
    UnclosedBracket { path: String },
    #[error("negative index in path {path:?}")]
    NegativeIndex { path: String },
    #[error("invalid index {index:?} in path {path:?}")]
    BadIndex { path: String, index: String },
    #[error("unexpected character {ch:?} in path {path:?}")]
    UnexpectedChar { path: String, ch: char },
    #[error("more than one wildcard in path {path:?}")]
    MultipleWildcards { path: String },
}

/// One step of a [`JsonPath`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathStep {
    /// Object member lookup.
    Key(String),
    /// Array element lookup.
    Index(usize),
    /// Scan an array in order, taking the first element whose remaining
    /// path resolves to a scalar.
    Wildcard,
}

/// A parsed path expression like `invoice.lines[*].amount`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JsonPath {
    pub steps: Vec<PathStep>,
}

impl fmt::Display for JsonPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            match step {
                PathStep::Key(k) => {
                    if i > 0 {
                        f.write_str(".")?;
                    }
                    f.write_str(k)?;
                }
                PathStep::Index(n) => write!(f, "[{n}]")?,
                PathStep::Wildcard => f.write_str("[*]")?,
            }
        }
        Ok(())
    }
}

/// Grammar: `path := segment ("." segment)*`, `segment := key bracket*`,
/// `bracket := "[" (digits | "*") "]"`. Keys cannot contain `.`, `[`, `]`.
pub fn parse_json_path(text: &str) -> Result<JsonPath, PathError> {
    if text.is_empty() {
        return Err(PathError::Empty);
    }
    let mut steps = Vec::new();
    let mut wildcards = 0usize;
    for segment in text.split('.') {
        if segment.is_empty() {
            return Err(PathError::EmptySegment {
                path: text.to_string(),
            });
        }
        let (key, mut rest) = match segment.find('[') {
            Some(pos) => segment.split_at(pos),
            None => (segment, ""),
        };
        if key.is_empty() {
            return Err(PathError::EmptySegment {
                path: text.to_string(),
            });
        }
        if let Some(ch) = key.chars().find(|c| *c == ']') {
            return Err(PathError::UnexpectedChar {
                path: text.to_string(),
                ch,
            });
        }
        steps.push(PathStep::Key(key.to_string()));
        while !rest.is_empty() {
            debug_assert!(rest.starts_with('['));
            let close = rest.find(']').ok_or_else(|| PathError::UnclosedBracket {
                path: text.to_string(),
            })?;
            let inner = &rest[1..close];
            if inner == "*" {
                wildcards += 1;
                steps.push(PathStep::Wildcard);
            } else if inner.starts_with('-') {
                return Err(PathError::NegativeIndex {
                    path: text.to_string(),
                });
            } else if !inner.is_empty() && inner.bytes().all(|b| b.is_ascii_digit()) {
                let index = inner.parse().map_err(|_| PathError::BadIndex {
                    path: text.to_string(),
                    index: inner.to_string(),
                })?;
                steps.push(PathStep::Index(index));
            } else {
                return Err(PathError::BadIndex {
                    path: text.to_string(),
                    index: inner.to_string(),
                });
            }
            rest = &rest[close + 1..];
            if !rest.is_empty() && !rest.starts_with('[') {
                return Err(PathError::UnexpectedChar {
                    path: text.to_string(),
                    ch: rest.chars().next().unwrap(),
                });
            }
        }
    }
    if wildcards > 1 {
        return Err(PathError::MultipleWildcards {
            path: text.to_string(),
        });
    }
    Ok(JsonPath { steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputType {
    Decimal,
    Integer,
    Date,
    Text,
    HashedText,
}

impl OutputType {
    pub fn token(self) -> &'static str {
        match self {
            OutputType::Decimal => "decimal",
            OutputType::Integer => "integer",
            OutputType::Date => "date",
            OutputType::Text => "text",
            OutputType::HashedText => "hashed_text",
        }
    }

    fn from_token(token: &str) -> Option<Self> {
        Some(match token {
            "decimal" => OutputType::Decimal,
            "integer" => OutputType::Integer,
            "date" => OutputType::Date,
            "text" => OutputType::Text,
            "hashed_text" => OutputType::HashedText,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entity {
    Bill,
    Pod,
    User,
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl Entity {
    pub fn token(self) -> &'static str {
        match self {
            Entity::Bill => "bill",
            Entity::Pod => "pod",
            Entity::User => "user",
        }
    }

    fn from_token(token: &str) -> Option<Self> {
        Some(match token {
            "bill" => Entity::Bill,
            "pod" => Entity::Pod,
            "user" => Entity::User,
            _ => return None,
        })
    }
}

/// How downstream stages treat a GAT beyond its plain value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Identifier,
    Attribute,
    BillDate,
    Age,
    Offer,
}

impl Role {
    pub fn token(self) -> &'static str {
        match self {
            Role::Identifier => "identifier",
            Role::Attribute => "attribute",
            Role::BillDate => "bill_date",
            Role::Age => "age",
            Role::Offer => "offer",
        }
    }

    fn from_token(token: &str) -> Option<Self> {
        Some(match token {
            "identifier" => Role::Identifier,
            "attribute" => Role::Attribute,
            "bill_date" => Role::BillDate,
            "age" => Role::Age,
            "offer" => Role::Offer,
            _ => return None,
        })
    }
}

/// One Global Attribute: a named field of interest, where to find it in the
/// bill JSON (ordered fallback paths), its cleaned type and target entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatDefinition {
    pub name: String,
    pub paths: Vec<JsonPath>,
    pub output_type: OutputType,
    pub entity: Entity,
    pub role: Role,
}

/// Month-name table used when cleaning dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MonthLocale {
    #[default]
    English,
    Italian,
}

/// The full mapping: an ordered list of GATs plus the date locale.
///
/// Immutable after construction and shareable across threads. The locale is
/// not part of the mapping file format; it defaults to English and is set
/// from pipeline configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingSpec {
    pub gats: Vec<GatDefinition>,
    pub month_locale: MonthLocale,
}

pub const HEADER: &str = "name;paths;output_type;entity;role";

impl MappingSpec {
    pub fn new(gats: Vec<GatDefinition>) -> Result<Self, MappingError> {
        let spec = MappingSpec {
            gats,
            month_locale: MonthLocale::English,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_month_locale(mut self, locale: MonthLocale) -> Self {
        self.month_locale = locale;
        self
    }

    pub fn gat(&self, name: &str) -> Option<&GatDefinition> {
        self.gats.iter().find(|g| g.name == name)
    }

    pub fn bill_date_gat(&self) -> &GatDefinition {
        self.gats
            .iter()
            .find(|g| g.role == Role::BillDate)
            .expect("validated spec has a bill_date GAT")
    }

    pub fn identifier_gat(&self, entity: Entity) -> &GatDefinition {
        self.gats
            .iter()
            .find(|g| g.role == Role::Identifier && g.entity == entity)
            .expect("validated spec has pod and user identifiers")
    }

    pub fn age_gat(&self) -> Option<&GatDefinition> {
        self.gats.iter().find(|g| g.role == Role::Age)
    }

    pub fn offer_gat(&self) -> Option<&GatDefinition> {
        self.gats.iter().find(|g| g.role == Role::Offer)
    }

    fn validate(&self) -> Result<(), MappingError> {
        if self.gats.is_empty() {
            return Err(MappingError::NoGats);
        }
        let mut seen = BTreeSet::new();
        for gat in &self.gats {
            if !seen.insert(gat.name.as_str()) {
                return Err(MappingError::DuplicateName {
                    name: gat.name.clone(),
                });
            }
            if gat.paths.is_empty() {
                return Err(MappingError::NoPaths {
                    name: gat.name.clone(),
                });
            }
        }

        let bill_dates: Vec<_> = self.gats.iter().filter(|g| g.role == Role::BillDate).collect();
        if bill_dates.len() != 1 {
            return Err(MappingError::BillDateCount {
                found: bill_dates.len(),
            });
        }
        let bd = bill_dates[0];
        if bd.entity != Entity::Bill || bd.output_type != OutputType::Date {
            return Err(MappingError::BillDateShape {
                name: bd.name.clone(),
            });
        }

        for entity in [Entity::Pod, Entity::User] {
            let ids: Vec<_> = self
                .gats
                .iter()
                .filter(|g| g.role == Role::Identifier && g.entity == entity)
                .collect();
            if ids.len() != 1 {
                return Err(MappingError::IdentifierCount {
                    entity,
                    found: ids.len(),
                });
            }
        }
        if let Some(bad) = self
            .gats
            .iter()
            .find(|g| g.role == Role::Identifier && g.entity == Entity::Bill)
        {
            return Err(MappingError::BillIdentifier {
                name: bad.name.clone(),
            });
        }

        let ages: Vec<_> = self.gats.iter().filter(|g| g.role == Role::Age).collect();
        if ages.len() > 1 {
            return Err(MappingError::AgeCount { found: ages.len() });
        }
        if let Some(age) = ages.first() {
            if age.entity != Entity::User || age.output_type != OutputType::Integer {
                return Err(MappingError::AgeShape {
                    name: age.name.clone(),
                });
            }
        }

        let offers: Vec<_> = self.gats.iter().filter(|g| g.role == Role::Offer).collect();
        if offers.len() > 1 {
            return Err(MappingError::OfferCount {
                found: offers.len(),
            });
        }
        if let Some(offer) = offers.first() {
            if offer.entity != Entity::Bill {
                return Err(MappingError::OfferShape {
                    name: offer.name.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Parse the mapping file. GAT order follows file order; all cross-GAT
/// invariants are validated before the spec is returned.
pub fn parse_mapping_file(content: &str) -> Result<MappingSpec, MappingError> {
    let mut lines = content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

    let (_, header) = lines.next().ok_or(MappingError::MissingHeader)?;
    if header.trim() != HEADER {
        return Err(MappingError::BadHeader {
            found: header.to_string(),
        });
    }

    let mut gats = Vec::new();
    for (line, raw) in lines {
        let cols: Vec<&str> = raw.split(';').collect();
        if cols.len() != 5 {
            return Err(MappingError::WrongColumnCount {
                line,
                found: cols.len(),
            });
        }
        let name = cols[0].trim();
        if name.is_empty() {
            return Err(MappingError::EmptyName { line });
        }
        let mut paths = Vec::new();
        for p in cols[1].split('|') {
            let p = p.trim();
            if p.is_empty() {
                continue;
            }
            paths.push(parse_json_path(p).map_err(|source| MappingError::BadPath { line, source })?);
        }
        if paths.is_empty() {
            return Err(MappingError::NoPaths {
                name: name.to_string(),
            });
        }
        let output_type = OutputType::from_token(cols[2].trim()).ok_or_else(|| {
            MappingError::UnknownToken {
                line,
                what: "output_type",
                token: cols[2].trim().to_string(),
            }
        })?;
        let entity =
            Entity::from_token(cols[3].trim()).ok_or_else(|| MappingError::UnknownToken {
                line,
                what: "entity",
                token: cols[3].trim().to_string(),
            })?;
        let role = Role::from_token(cols[4].trim()).ok_or_else(|| MappingError::UnknownToken {
            line,
            what: "role",
            token: cols[4].trim().to_string(),
        })?;
        gats.push(GatDefinition {
            name: name.to_string(),
            paths,
            output_type,
            entity,
            role,
        });
    }
    MappingSpec::new(gats)
}

/// Render a spec back to the mapping-file format. `parse_mapping_file`
/// of the result yields the same GATs.
pub fn serialize_mapping_file(spec: &MappingSpec) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for gat in &spec.gats {
        let paths = gat
            .paths
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join("|");
        out.push_str(&format!(
            "{};{};{};{};{}\n",
            gat.name,
            paths,
            gat.output_type.token(),
            gat.entity.token(),
            gat.role.token()
        ));
    }
    out
}
