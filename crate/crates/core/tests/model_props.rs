mod common;

use chatnet_core::net_model::{
    apply_action, parse_topology, parse_traffic_matrix, validate_topology, Action,
};
use common::strategies::{demands, topology};
use proptest::prelude::*;
use proptest::sample::Index;

proptest! {
    #[test]
    fn topology_json_round_trips(t in topology(2, 8)) {
        prop_assert!(validate_topology(&t).is_empty());
        prop_assert_eq!(parse_topology(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn actions_keep_topologies_valid(
        t in topology(2, 8),
        a in any::<Index>(),
        b in any::<Index>(),
        km in 1u32..500,
        pick in any::<Index>(),
        extra in 1u32..5,
    ) {
        let n = t.nodes.len();
        let (a, b) = (a.index(n), b.index(n));
        if a != b {
            let fiber = Action::AddFiber { a: format!("N{a}"), b: format!("N{b}"), length_km: f64::from(km) };
            let next = apply_action(&t, &fiber).unwrap();
            prop_assert!(validate_topology(&next).is_empty());
            prop_assert_eq!(next.ip_links.len(), t.ip_links.len() + 1);
            prop_assert_eq!(next.ip_links.last().unwrap().capacity_modules, 1);
        }
        let link = &t.ip_links[pick.index(t.ip_links.len())];
        let grow = Action::AddCapacity { ip_link_id: link.id.clone(), extra_modules: extra };
        let next = apply_action(&t, &grow).unwrap();
        prop_assert!(validate_topology(&next).is_empty());
        prop_assert_eq!(next.ip_link(&link.id).unwrap().capacity_modules, link.capacity_modules + extra);
    }

    #[test]
    fn traffic_rows_become_demands(m in demands(8, 20)) {
        let csv = m.to_csv();
        let rows = csv.lines().count() - 1;
        let parsed = parse_traffic_matrix(&csv).unwrap();
        prop_assert_eq!(parsed.demands.len(), rows);
        prop_assert_eq!(parsed, m);
    }
}
