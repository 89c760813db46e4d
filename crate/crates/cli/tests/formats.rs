use abusegraph::config::{Config, KEYS};
use abusegraph::formats::{format_labels, format_transactions, parse_labels, parse_transactions, Artifact};
use abusegraph_core::{Label, LabelSet, RelationKind, Transaction};
use proptest::prelude::*;

fn value() -> impl Strategy<Value = Option<String>> {
    prop::option::of("[a-z0-9 _\"#-]{1,6}")
}

fn txn() -> impl Strategy<Value = Transaction> {
    (
        "[a-z0-9]{1,5}",
        "[a-z0-9]{1,5}",
        -5i64..40,
        1u32..50,
        0.0f64..1e4,
        prop::option::of(-1e3f64..1e3),
        prop::array::uniform8(value()),
    )
        .prop_map(|(user, product, day, quantity, price, gm, values)| {
            let mut t = Transaction::new("", user, product, day).with_quantity(quantity).with_price(price);
            t.gross_margin = gm;
            t.relation_values = values;
            t
        })
}

proptest! {
    #[test]
    fn transactions_round_trip(mut txns in prop::collection::vec(txn(), 0..20), stamped in any::<bool>()) {
        for (i, t) in txns.iter_mut().enumerate() {
            t.txn_id = format!("t{i}");
        }
        let hash = stamped.then_some("feed");
        let text = format_transactions(&txns, hash);
        let art = Artifact::parse(&text);
        prop_assert_eq!(art.hash.as_deref(), hash);
        let back = parse_transactions(&art).unwrap();
        prop_assert_eq!(&back, &txns);
        prop_assert_eq!(format_transactions(&back, hash), text);
    }

    #[test]
    fn labels_round_trip(entries in prop::collection::btree_map("[a-z]{1,4}", -1i64..=1, 0..20)) {
        let set: LabelSet = entries.iter().map(|(u, c)| (u.clone(), Label::from_code(*c).unwrap())).collect();
        let text = format_labels(&set, None);
        let back = parse_labels(&Artifact::parse(&text)).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(format_labels(&back, None), text);
    }

    #[test]
    fn config_overrides_round_trip(kappa in 0.5f64..5.0, seed in any::<u64>(), tp in 0.1f64..0.99) {
        let mut cfg = Config::default();
        cfg.set("kappa", &kappa.to_string()).unwrap();
        cfg.set("seed", &seed.to_string()).unwrap();
        cfg.set("propagation_threshold", &tp.to_string()).unwrap();
        let mut back = Config::default();
        back.apply_text(&cfg.to_text(), "dump").unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn every_key_is_settable_from_its_own_dump() {
    let cfg = Config::default();
    for key in KEYS {
        let mut c = Config::default();
        c.set(key, &cfg.get(key).unwrap()).unwrap();
        assert_eq!(c, cfg, "{key}");
    }
}

#[test]
fn relation_columns_follow_kind_order() {
    let t = Transaction::new("t", "u", "p", 1).with_relation(RelationKind::Stimulation, "s");
    let text = format_transactions(&[t], None);
    assert!(text.starts_with("txn_id,user_id,product_id,day,quantity,price,gross_margin,r1,r2,r3,r4,r5,r6,r7,r8\n"));
    assert!(text.lines().nth(1).unwrap().ends_with(",s"));
}
