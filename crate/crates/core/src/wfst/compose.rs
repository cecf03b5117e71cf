use std::collections::{HashMap, VecDeque};

use super::fst::{Arc, Fst, StateId, EPS};
use super::WfstError;

/// Composition filter state: 0 means the left machine may still take
/// output-epsilon moves, 1 means the right machine has started moving on its
/// own and the left machine must wait for the next matched label.
type FilterState = u8;

/// Composes `a ∘ b` with the epsilon-sequencing filter, so every pair of
/// component paths yields exactly one composed path. Output is trimmed.
pub fn compose(a: &Fst, b: &Fst) -> Result<Fst, WfstError> {
    if a.osyms != b.isyms {
        return Err(WfstError::SymbolTableMismatch);
    }
    if a.semiring != b.semiring {
        return Err(WfstError::SemiringMismatch);
    }
    let mut out = Fst::new(a.semiring, a.isyms.clone(), b.osyms.clone());
    let (Some(sa), Some(sb)) = (a.start(), b.start()) else {
        return Ok(out);
    };

    // b's arcs sorted by input label for matching
    let b_sorted: Vec<Vec<Arc>> = b
        .states()
        .map(|s| {
            let mut v = b.arcs(s).to_vec();
            v.sort_by_key(|x| x.ilabel);
            v
        })
        .collect();

    let mut ids: HashMap<(StateId, StateId, FilterState), StateId> = HashMap::new();
    let mut queue = VecDeque::new();
    let start = out.add_state();
    out.set_start(start);
    ids.insert((sa, sb, 0), start);
    queue.push_back((sa, sb, 0u8, start));

    let mut get_id = |key: (StateId, StateId, FilterState),
                      out: &mut Fst,
                      queue: &mut VecDeque<(StateId, StateId, FilterState, StateId)>| {
        *ids.entry(key).or_insert_with(|| {
            let id = out.add_state();
            queue.push_back((key.0, key.1, key.2, id));
            id
        })
    };

    while let Some((s1, s2, fs, id)) = queue.pop_front() {
        if let (Some(w1), Some(w2)) = (a.final_weight(s1), b.final_weight(s2)) {
            out.set_final(id, a.semiring.times(w1, w2));
        }
        let barcs = &b_sorted[s2 as usize];
        for arc1 in a.arcs(s1) {
            if arc1.olabel == EPS {
                // left moves alone
                if fs == 0 {
                    let n = get_id((arc1.next, s2, 0), &mut out, &mut queue);
                    out.add_arc(id, Arc::new(arc1.ilabel, EPS, arc1.weight, n));
                }
                continue;
            }
            let lo = barcs.partition_point(|x| x.ilabel < arc1.olabel);
            for arc2 in barcs[lo..].iter().take_while(|x| x.ilabel == arc1.olabel) {
                let n = get_id((arc1.next, arc2.next, 0), &mut out, &mut queue);
                out.add_arc(
                    id,
                    Arc::new(
                        arc1.ilabel,
                        arc2.olabel,
                        a.semiring.times(arc1.weight, arc2.weight),
                        n,
                    ),
                );
            }
        }
        // right moves alone on its input epsilons
        let eps_end = barcs.partition_point(|x| x.ilabel == EPS);
        for arc2 in &barcs[..eps_end] {
            let n = get_id((s1, arc2.next, 1), &mut out, &mut queue);
            out.add_arc(id, Arc::new(EPS, arc2.olabel, arc2.weight, n));
        }
    }
    out.connect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::fst::{Semiring, SymbolTable};
    use super::*;

    #[test]
    fn single_arc_weights_add() {
        let x = SymbolTable::from_symbols(["x"]);
        let y = SymbolTable::from_symbols(["y"]);
        let z = SymbolTable::from_symbols(["z"]);
        let mut a = Fst::new(Semiring::Tropical, x, y.clone());
        let (a0, a1) = (a.add_state(), a.add_state());
        a.set_start(a0);
        a.add_arc(a0, Arc::new(1, 1, 1.0, a1));
        a.set_final(a1, 0.0);
        let mut b = Fst::new(Semiring::Tropical, y, z);
        let (b0, b1) = (b.add_state(), b.add_state());
        b.set_start(b0);
        b.add_arc(b0, Arc::new(1, 1, 2.0, b1));
        b.set_final(b1, 0.0);
        let c = compose(&a, &b).unwrap();
        assert_eq!(c.num_states(), 2);
        let arcs = c.arcs(c.start().unwrap());
        assert_eq!(arcs.len(), 1);
        assert_eq!((arcs[0].ilabel, arcs[0].olabel, arcs[0].weight), (1, 1, 3.0));
    }

    #[test]
    fn table_mismatch_is_an_error() {
        let a = Fst::new(
            Semiring::Tropical,
            SymbolTable::new(),
            SymbolTable::from_symbols(["p"]),
        );
        let b = Fst::new(
            Semiring::Tropical,
            SymbolTable::from_symbols(["q"]),
            SymbolTable::new(),
        );
        assert!(matches!(compose(&a, &b), Err(WfstError::SymbolTableMismatch)));
    }
}
