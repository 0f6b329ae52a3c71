//! Properties of the class-hierarchy queries over random hierarchies.

mod common;

use std::collections::BTreeSet;

use common::{random_hierarchy, GenType, Kind};
use minimuli::classes::{ClassTable, MethodKey, TypeId};
use minimuli::compile;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Subtype relation read straight off the generated declarations.
fn declared_subtype(types: &[GenType], sub: usize, sup: usize) -> bool {
    sub == sup
        || types[sub].extends.is_some_and(|p| declared_subtype(types, p, sup))
        || types[sub].implements.iter().any(|&p| declared_subtype(types, p, sup))
}

fn build(seed: u64) -> (Vec<GenType>, ClassTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (types, src) = random_hierarchy(&mut rng, 8);
    let program = compile(&src).unwrap_or_else(|e| panic!("{e}\n{src}"));
    (types, program.table)
}

fn ids(table: &ClassTable, types: &[GenType], idx: impl IntoIterator<Item = usize>) -> BTreeSet<TypeId> {
    idx.into_iter()
        .map(|i| table.lookup(&types[i].name).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn subtypes_and_cones_match_declarations(seed in any::<u64>()) {
        let (types, table) = build(seed);
        for t in 0..types.len() {
            let id = table.lookup(&types[t].name).unwrap();
            let below: Vec<usize> = (0..types.len())
                .filter(|&s| s != t && declared_subtype(&types, s, t))
                .collect();
            prop_assert_eq!(table.subtypes(id).unwrap(), ids(&table, &types, below.iter().copied()));
            let cone = table.cone(id).unwrap();
            prop_assert!(cone.contains(&id));
            let relevant: Vec<usize> = (0..types.len())
                .filter(|&s| types[s].kind == Kind::Concrete && declared_subtype(&types, s, t))
                .collect();
            prop_assert_eq!(table.relevant_types(id).unwrap(), ids(&table, &types, relevant));
        }
    }

    #[test]
    fn cone_is_monotone(seed in any::<u64>()) {
        let (types, table) = build(seed);
        for a in 0..types.len() {
            for b in 0..types.len() {
                if declared_subtype(&types, a, b) {
                    let ca = table.cone(table.lookup(&types[a].name).unwrap()).unwrap();
                    let cb = table.cone(table.lookup(&types[b].name).unwrap()).unwrap();
                    prop_assert!(ca.is_subset(&cb));
                }
            }
        }
    }

    #[test]
    fn candidate_sets_nest(seed in any::<u64>()) {
        let (types, table) = build(seed);
        let key = MethodKey::new("m", 0);
        for t in &types {
            let id = table.lookup(&t.name).unwrap();
            let s = table.subtypes(id).unwrap();
            let s1 = table.relevant_types(id).unwrap();
            let mut s_or_t = s.clone();
            s_or_t.insert(id);
            prop_assert!(s1.is_subset(&s_or_t));
            // an owner is a candidate or a class that candidates inherit from
            let s2 = table.implementations(&s1, &key).unwrap();
            for owner in &s2 {
                prop_assert!(
                    s1.contains(owner)
                        || s1.iter().any(|c| table.superclass_chain(*c).any(|a| a == *owner))
                );
            }
            for owner in &s2 {
                prop_assert!(table.class(*owner).method(&key).is_some_and(|m| m.imp.has_body()));
            }
        }
    }

    #[test]
    fn instance_sets_partition_the_candidates(seed in any::<u64>()) {
        let (types, table) = build(seed);
        let key = MethodKey::new("m", 0);
        for t in &types {
            let id = table.lookup(&t.name).unwrap();
            let universe = table.relevant_types(id).unwrap();
            let owners = table.implementations(&universe, &key).unwrap();
            let mut union = BTreeSet::new();
            for owner in &owners {
                let set = table.instance_types_for(*owner, &key, &universe).unwrap();
                prop_assert!(!set.is_empty());
                prop_assert!(union.is_disjoint(&set));
                union.extend(set);
            }
            prop_assert_eq!(union, universe);
        }
    }
}
