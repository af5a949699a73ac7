//! Pivot cleaned long-format rows into one record per bill, split fields
//! into Bill/POD/User tables, and reconcile per-entity conflicts.
//!
//! The denormalized wide table repeats POD data once per bill and user data
//! once per (POD, bill); the same user can appear with a missing sex in one
//! bill and a different age in another. The resolution function keeps, for
//! every attribute independently, the most recent non-null value by bill
//! date. Ages are first converted to a year of birth using each member's
//! own bill date, which makes the fused value independent of which bill
//! carried it.

use crate::clean::CleanFailure;
use crate::mapping::{Entity, GatDefinition, MappingSpec, Role};
use crate::value::{CivilDate, CleanValue};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FuseError {
    #[error("duplicate cell for bill {bill_id:?}, gat {gat:?}")]
    DuplicateCell { bill_id: String, gat: String },
    #[error("referential integrity violated: {0}")]
    Integrity(String),
}

/// One row of the cleaned long-format file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanedRow {
    pub bill_id: String,
    pub gat: String,
    pub value: CleanValue,
}

/// One record per bill, every GAT present (possibly null).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WideRecord {
    pub bill_id: String,
    pub values: BTreeMap<String, CleanValue>,
}

/// A record excluded from a stage, with a machine-readable reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuarantineEntry {
    pub key: String,
    pub reason: String,
}

/// One entity occurrence extracted from one bill.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMember {
    pub bill_date: CivilDate,
    pub bill_id: String,
    pub attrs: BTreeMap<String, CleanValue>,
}

/// All occurrences of one POD or user across the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionGroup {
    pub key: String,
    pub members: Vec<GroupMember>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BillRow {
    pub bill_id: String,
    pub pod_id: String,
    /// Bill-entity GAT values, aligned with `EntityTables::bill_columns`.
    pub values: Vec<CleanValue>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PodRow {
    pub pod_id: String,
    pub user_id: String,
    pub values: Vec<CleanValue>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRow {
    pub user_id: String,
    pub year_of_birth: Option<i64>,
    pub values: Vec<CleanValue>,
}

/// The three fused relational tables, keys sorted, with the column names
/// each `values` vector is aligned to.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EntityTables {
    pub bill_columns: Vec<String>,
    pub pod_columns: Vec<String>,
    pub user_columns: Vec<String>,
    pub bills: Vec<BillRow>,
    pub pods: Vec<PodRow>,
    pub users: Vec<UserRow>,
}

impl EntityTables {
    /// Verify bills→pods→users key resolution and key uniqueness.
    pub fn check_referential_integrity(&self) -> Result<(), FuseError> {
        let pod_ids: BTreeSet<&str> = self.pods.iter().map(|p| p.pod_id.as_str()).collect();
        let user_ids: BTreeSet<&str> = self.users.iter().map(|u| u.user_id.as_str()).collect();
        if pod_ids.len() != self.pods.len() {
            return Err(FuseError::Integrity("duplicate pod_id".into()));
        }
        if user_ids.len() != self.users.len() {
            return Err(FuseError::Integrity("duplicate user_id".into()));
        }
        let bill_ids: BTreeSet<&str> = self.bills.iter().map(|b| b.bill_id.as_str()).collect();
        if bill_ids.len() != self.bills.len() {
            return Err(FuseError::Integrity("duplicate bill_id".into()));
        }
        for bill in &self.bills {
            if !pod_ids.contains(bill.pod_id.as_str()) {
                return Err(FuseError::Integrity(format!(
                    "bill {:?} references missing pod {:?}",
                    bill.bill_id, bill.pod_id
                )));
            }
        }
        for pod in &self.pods {
            if !user_ids.contains(pod.user_id.as_str()) {
                return Err(FuseError::Integrity(format!(
                    "pod {:?} references missing user {:?}",
                    pod.pod_id, pod.user_id
                )));
            }
        }
        Ok(())
    }
}

fn entity_gats(spec: &MappingSpec, entity: Entity) -> Vec<&GatDefinition> {
    spec.gats.iter().filter(|g| g.entity == entity).collect()
}

/// Long → wide. One record per bill with every GAT present; bills with a
/// null bill date or null POD identifier go to quarantine, not the output.
pub fn pivot(
    rows: &[CleanedRow],
    spec: &MappingSpec,
) -> Result<(Vec<WideRecord>, Vec<QuarantineEntry>), FuseError> {
    let mut by_bill: BTreeMap<&str, BTreeMap<&str, &CleanValue>> = BTreeMap::new();
    for row in rows {
        let cell = by_bill.entry(&row.bill_id).or_default();
        if cell.insert(&row.gat, &row.value).is_some() {
            return Err(FuseError::DuplicateCell {
                bill_id: row.bill_id.clone(),
                gat: row.gat.clone(),
            });
        }
    }

    let bill_date_gat = &spec.bill_date_gat().name;
    let pod_id_gat = &spec.identifier_gat(Entity::Pod).name;
    let mut records = Vec::new();
    let mut quarantine = Vec::new();
    for (bill_id, cells) in by_bill {
        let values: BTreeMap<String, CleanValue> = spec
            .gats
            .iter()
            .map(|g| {
                let v = cells.get(g.name.as_str()).copied().cloned();
                (g.name.clone(), v.unwrap_or(CleanValue::Null))
            })
            .collect();
        match &values[bill_date_gat] {
            CleanValue::Date(_) => {}
            CleanValue::Null => {
                quarantine.push(QuarantineEntry {
                    key: bill_id.to_string(),
                    reason: "null bill date".into(),
                });
                continue;
            }
            other => {
                quarantine.push(QuarantineEntry {
                    key: bill_id.to_string(),
                    reason: format!("bill date has non-date type {:?}", other.tag()),
                });
                continue;
            }
        }
        if values[pod_id_gat].is_null() {
            quarantine.push(QuarantineEntry {
                key: bill_id.to_string(),
                reason: "null POD identifier".into(),
            });
            continue;
        }
        records.push(WideRecord {
            bill_id: bill_id.to_string(),
            values,
        });
    }
    Ok((records, quarantine))
}

/// Output of [`split_entities`]: bill rows plus the per-entity fusion
/// groups that still need conflict resolution.
#[derive(Debug, Default)]
pub struct SplitOutput {
    pub bill_columns: Vec<String>,
    pub bill_rows: Vec<BillRow>,
    pub pod_groups: Vec<FusionGroup>,
    pub user_groups: Vec<FusionGroup>,
    pub quarantine: Vec<QuarantineEntry>,
}

/// Divide each wide record's fields by target entity.
///
/// Bill fields become one row per record. POD and user fields become
/// fusion-group members stamped with the record's bill date; a user group
/// collects members across all of that user's PODs. The POD's user
/// identifier rides along as a group attribute so the pod→user key is
/// itself fused by recency.
pub fn split_entities(wide: &[WideRecord], spec: &MappingSpec) -> SplitOutput {
    let bill_date_gat = &spec.bill_date_gat().name;
    let pod_id_gat = &spec.identifier_gat(Entity::Pod).name;
    let user_id_gat = &spec.identifier_gat(Entity::User).name;
    let bill_gats = entity_gats(spec, Entity::Bill);
    let pod_attr_gats: Vec<_> = entity_gats(spec, Entity::Pod)
        .into_iter()
        .filter(|g| g.role != Role::Identifier)
        .collect();
    let user_attr_gats: Vec<_> = entity_gats(spec, Entity::User)
        .into_iter()
        .filter(|g| g.role != Role::Identifier)
        .collect();

    let mut out = SplitOutput {
        bill_columns: bill_gats.iter().map(|g| g.name.clone()).collect(),
        ..Default::default()
    };
    let mut pod_groups: BTreeMap<String, Vec<GroupMember>> = BTreeMap::new();
    let mut user_groups: BTreeMap<String, Vec<GroupMember>> = BTreeMap::new();

    for record in wide {
        let CleanValue::Date(bill_date) = record.values[bill_date_gat] else {
            unreachable!("pivot admits only dated records");
        };
        let pod_id = record.values[pod_id_gat].render();

        out.bill_rows.push(BillRow {
            bill_id: record.bill_id.clone(),
            pod_id: pod_id.clone(),
            values: bill_gats
                .iter()
                .map(|g| record.values[&g.name].clone())
                .collect(),
        });

        let mut pod_attrs: BTreeMap<String, CleanValue> = pod_attr_gats
            .iter()
            .map(|g| (g.name.clone(), record.values[&g.name].clone()))
            .collect();
        pod_attrs.insert(user_id_gat.clone(), record.values[user_id_gat].clone());
        pod_groups.entry(pod_id).or_default().push(GroupMember {
            bill_date,
            bill_id: record.bill_id.clone(),
            attrs: pod_attrs,
        });

        match &record.values[user_id_gat] {
            CleanValue::Null => out.quarantine.push(QuarantineEntry {
                key: record.bill_id.clone(),
                reason: "null user identifier; user-table membership deferred".into(),
            }),
            user_id => {
                let user_attrs: BTreeMap<String, CleanValue> = user_attr_gats
                    .iter()
                    .map(|g| (g.name.clone(), record.values[&g.name].clone()))
                    .collect();
                user_groups
                    .entry(user_id.render())
                    .or_default()
                    .push(GroupMember {
                        bill_date,
                        bill_id: record.bill_id.clone(),
                        attrs: user_attrs,
                    });
            }
        }
    }

    out.pod_groups = pod_groups
        .into_iter()
        .map(|(key, members)| FusionGroup { key, members })
        .collect();
    out.user_groups = user_groups
        .into_iter()
        .map(|(key, members)| FusionGroup { key, members })
        .collect();
    out
}

/// The resolution function: per attribute, the value of the member with
/// the latest bill date among members where that attribute is non-null;
/// ties on the date go to the lexicographically greatest bill id.
pub fn resolve_most_recent_non_null(group: &FusionGroup) -> BTreeMap<String, CleanValue> {
    let mut order: Vec<&GroupMember> = group.members.iter().collect();
    order.sort_by(|a, b| {
        (b.bill_date, b.bill_id.as_str()).cmp(&(a.bill_date, a.bill_id.as_str()))
    });
    let mut fused = BTreeMap::new();
    for member in &order {
        for (name, value) in &member.attrs {
            fused.entry(name.clone()).or_insert(CleanValue::Null);
            if !value.is_null() {
                let slot = fused.get_mut(name).expect("just inserted");
                if slot.is_null() {
                    *slot = value.clone();
                }
            }
        }
    }
    fused
}

/// Replace an age by the year of birth implied by the bill that carried it.
pub fn year_of_birth(age: i64, bill_date: CivilDate) -> Result<i64, CleanFailure> {
    if !(0..=130).contains(&age) {
        return Err(CleanFailure {
            reason: format!("age {age} out of range 0..=130"),
        });
    }
    Ok(bill_date.year as i64 - age)
}

/// Fuse every group and assemble the three tables.
///
/// Ages are converted per member (each with its own bill date) before
/// fusion. A POD whose bills never carry a user identifier cannot satisfy
/// the pods→users key, so it is quarantined together with its bills.
pub fn build_tables(
    split: SplitOutput,
    spec: &MappingSpec,
) -> Result<(EntityTables, Vec<QuarantineEntry>), FuseError> {
    let user_id_gat = &spec.identifier_gat(Entity::User).name;
    let age_gat = spec.age_gat().map(|g| g.name.clone());
    let mut quarantine = split.quarantine;

    let pod_columns: Vec<String> = entity_gats(spec, Entity::Pod)
        .into_iter()
        .filter(|g| g.role != Role::Identifier)
        .map(|g| g.name.clone())
        .collect();
    let user_columns: Vec<String> = entity_gats(spec, Entity::User)
        .into_iter()
        .filter(|g| g.role != Role::Identifier && g.role != Role::Age)
        .map(|g| g.name.clone())
        .collect();

    let mut dropped_pods: BTreeSet<String> = BTreeSet::new();
    let mut pods = Vec::new();
    for group in &split.pod_groups {
        let fused = resolve_most_recent_non_null(group);
        match &fused[user_id_gat] {
            CleanValue::Null => {
                quarantine.push(QuarantineEntry {
                    key: format!("pod:{}", group.key),
                    reason: "no bill of this POD carries a user identifier".into(),
                });
                dropped_pods.insert(group.key.clone());
            }
            user_id => pods.push(PodRow {
                pod_id: group.key.clone(),
                user_id: user_id.render(),
                values: pod_columns.iter().map(|c| fused[c].clone()).collect(),
            }),
        }
    }

    let mut users = Vec::new();
    for group in &split.user_groups {
        let converted = match &age_gat {
            Some(age_name) => convert_ages(group, age_name, &mut quarantine),
            None => group.clone(),
        };
        let fused = resolve_most_recent_non_null(&converted);
        let year_of_birth = match age_gat.as_ref().map(|n| &fused[n]) {
            Some(CleanValue::Integer(y)) => Some(*y),
            _ => None,
        };
        users.push(UserRow {
            user_id: group.key.clone(),
            year_of_birth,
            values: user_columns.iter().map(|c| fused[c].clone()).collect(),
        });
    }

    let mut bills = Vec::new();
    for row in split.bill_rows {
        if dropped_pods.contains(&row.pod_id) {
            quarantine.push(QuarantineEntry {
                key: row.bill_id.clone(),
                reason: format!("POD {:?} quarantined (no user identifier)", row.pod_id),
            });
        } else {
            bills.push(row);
        }
    }
    bills.sort_by(|a, b| a.bill_id.cmp(&b.bill_id));

    let tables = EntityTables {
        bill_columns: split.bill_columns,
        pod_columns,
        user_columns,
        bills,
        pods,
        users,
    };
    tables.check_referential_integrity()?;
    Ok((tables, quarantine))
}

/// Rewrite each member's age attribute to the year of birth implied by its
/// own bill date. Invalid ages null out with a quarantine entry.
fn convert_ages(
    group: &FusionGroup,
    age_gat: &str,
    quarantine: &mut Vec<QuarantineEntry>,
) -> FusionGroup {
    let mut converted = group.clone();
    for member in &mut converted.members {
        if let Some(slot) = member.attrs.get_mut(age_gat) {
            *slot = match slot {
                CleanValue::Integer(age) => match year_of_birth(*age, member.bill_date) {
                    Ok(yob) => CleanValue::Integer(yob),
                    Err(failure) => {
                        quarantine.push(QuarantineEntry {
                            key: member.bill_id.clone(),
                            reason: failure.reason,
                        });
                        CleanValue::Null
                    }
                },
                _ => CleanValue::Null,
            };
        }
    }
    converted
}
