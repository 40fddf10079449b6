use std::time::Instant;

use suc_core::boolean::{self, anf_to_tt, combiner_f16, walsh_transform};

#[test]
fn f16_profile() {
    let start = Instant::now();
    let p = boolean::profile(&combiner_f16()).unwrap();
    eprintln!("profile {p:?} in {:?}", start.elapsed());
    assert!(p.balanced);
    assert_eq!(p.algebraic_degree, 4);
    assert_eq!(p.correlation_immunity, 8);
    assert_eq!(p.nonlinearity, 26624);
    assert_eq!(p.algebraic_immunity, 4);
}

#[test]
fn f16_table_weight_and_spectrum_origin() {
    let tt = anf_to_tt(&combiner_f16()).unwrap();
    assert_eq!(tt.len(), 1 << 16);
    assert_eq!(tt.weight(), 32768);
    let s = walsh_transform(&tt);
    assert_eq!(s.at(0), 0);
    assert_eq!(s.max_abs(), 12288);
}

#[test]
fn f16_annihilator_is_sound() {
    let tt = anf_to_tt(&combiner_f16()).unwrap();
    let w = boolean::algebraic_immunity_witness(&tt).unwrap();
    let target = if w.of_complement { tt.complement() } else { tt };
    assert_eq!(w.annihilator.degree(), 4);
    for x in 0..1u64 << 16 {
        assert!(!(target.get(x) && w.annihilator.eval(x)));
    }
}
