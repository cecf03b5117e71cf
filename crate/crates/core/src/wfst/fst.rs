use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use super::WfstError;

pub type Label = u32;
pub type StateId = u32;

/// Label 0 is epsilon in every symbol table.
pub const EPS: Label = 0;
pub const EPS_SYMBOL: &str = "<eps>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Semiring {
    #[default]
    Tropical,
    Log,
}

impl Semiring {
    pub fn zero(self) -> f64 {
        f64::INFINITY
    }

    pub fn one(self) -> f64 {
        0.0
    }

    pub fn plus(self, a: f64, b: f64) -> f64 {
        match self {
            Semiring::Tropical => a.min(b),
            Semiring::Log => {
                if a == f64::INFINITY {
                    b
                } else if b == f64::INFINITY {
                    a
                } else {
                    -crate::log_add(-a, -b)
                }
            }
        }
    }

    pub fn times(self, a: f64, b: f64) -> f64 {
        a + b
    }
}

/// String ↔ label table. Label 0 is always `<eps>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<String>,
    index: HashMap<String, Label>,
}

impl Default for SymbolTable {
    fn default() -> Self {
        Self::new()
    }
}

impl SymbolTable {
    pub fn new() -> Self {
        let mut t = SymbolTable {
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        t.add(EPS_SYMBOL);
        t
    }

    pub fn from_symbols<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut t = Self::new();
        for s in symbols {
            t.add(s.as_ref());
        }
        t
    }

    /// Returns the label of `symbol`, adding it if missing.
    pub fn add(&mut self, symbol: &str) -> Label {
        if let Some(&l) = self.index.get(symbol) {
            return l;
        }
        let l = self.symbols.len() as Label;
        self.symbols.push(symbol.to_string());
        self.index.insert(symbol.to_string(), l);
        l
    }

    pub fn find(&self, symbol: &str) -> Option<Label> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, label: Label) -> Option<&str> {
        self.symbols.get(label as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.len() <= 1
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub ilabel: Label,
    pub olabel: Label,
    pub weight: f64,
    pub next: StateId,
}

impl Arc {
    pub fn new(ilabel: Label, olabel: Label, weight: f64, next: StateId) -> Self {
        Arc {
            ilabel,
            olabel,
            weight,
            next,
        }
    }
}

/// Mutable weighted transducer with dense state ids.
#[derive(Debug, Clone)]
pub struct Fst {
    arcs: Vec<Vec<Arc>>,
    finals: Vec<Option<f64>>,
    start: Option<StateId>,
    pub semiring: Semiring,
    pub isyms: SymbolTable,
    pub osyms: SymbolTable,
}

impl Fst {
    pub fn new(semiring: Semiring, isyms: SymbolTable, osyms: SymbolTable) -> Self {
        Fst {
            arcs: Vec::new(),
            finals: Vec::new(),
            start: None,
            semiring,
            isyms,
            osyms,
        }
    }

    pub fn add_state(&mut self) -> StateId {
        self.arcs.push(Vec::new());
        self.finals.push(None);
        (self.arcs.len() - 1) as StateId
    }

    pub fn set_start(&mut self, s: StateId) {
        self.start = Some(s);
    }

    pub fn start(&self) -> Option<StateId> {
        self.start
    }

    pub fn set_final(&mut self, s: StateId, weight: f64) {
        self.finals[s as usize] = Some(weight);
    }

    pub fn final_weight(&self, s: StateId) -> Option<f64> {
        self.finals[s as usize]
    }

    pub fn add_arc(&mut self, s: StateId, arc: Arc) {
        self.arcs[s as usize].push(arc);
    }

    pub fn arcs(&self, s: StateId) -> &[Arc] {
        &self.arcs[s as usize]
    }

    pub fn arcs_mut(&mut self, s: StateId) -> &mut Vec<Arc> {
        &mut self.arcs[s as usize]
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        0..self.arcs.len() as StateId
    }

    /// True when the machine accepts nothing (no start or no reachable final).
    pub fn is_empty(&self) -> bool {
        let Some(start) = self.start else {
            return true;
        };
        let reach = self.reachable_from(start);
        !self
            .states()
            .any(|s| reach[s as usize] && self.finals[s as usize].is_some())
    }

    /// Structural check: start exists and every arc target exists.
    pub fn validate(&self) -> Result<(), WfstError> {
        let n = self.num_states() as StateId;
        match self.start {
            Some(s) if s < n => {}
            Some(s) => return Err(WfstError::Structure(format!("start state {s} missing"))),
            None if n == 0 => {}
            None => return Err(WfstError::Structure("no start state".into())),
        }
        for s in self.states() {
            for a in self.arcs(s) {
                if a.next >= n {
                    return Err(WfstError::Structure(format!(
                        "arc from {s} targets missing state {}",
                        a.next
                    )));
                }
                if a.ilabel as usize >= self.isyms.len() || a.olabel as usize >= self.osyms.len() {
                    return Err(WfstError::Structure(format!(
                        "arc from {s} uses a label outside its symbol table"
                    )));
                }
            }
        }
        Ok(())
    }

    fn reachable_from(&self, start: StateId) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut queue = VecDeque::from([start]);
        seen[start as usize] = true;
        while let Some(s) = queue.pop_front() {
            for a in self.arcs(s) {
                if !seen[a.next as usize] {
                    seen[a.next as usize] = true;
                    queue.push_back(a.next);
                }
            }
        }
        seen
    }

    /// Removes states that are not both accessible and coaccessible.
    pub fn connect(&mut self) {
        let Some(start) = self.start else {
            self.arcs.clear();
            self.finals.clear();
            return;
        };
        let access = self.reachable_from(start);
        let n = self.num_states();
        let mut reverse: Vec<Vec<StateId>> = vec![Vec::new(); n];
        for s in self.states() {
            for a in self.arcs(s) {
                reverse[a.next as usize].push(s);
            }
        }
        let mut coaccess = vec![false; n];
        let mut queue: VecDeque<StateId> = self
            .states()
            .filter(|&s| self.finals[s as usize].is_some())
            .collect();
        for &s in &queue {
            coaccess[s as usize] = true;
        }
        while let Some(s) = queue.pop_front() {
            for &p in &reverse[s as usize] {
                if !coaccess[p as usize] {
                    coaccess[p as usize] = true;
                    queue.push_back(p);
                }
            }
        }
        let keep: Vec<bool> = (0..n).map(|i| access[i] && coaccess[i]).collect();
        if !keep[start as usize] {
            self.arcs.clear();
            self.finals.clear();
            self.start = None;
            return;
        }
        let mut remap = vec![StateId::MAX; n];
        let mut next_id = 0;
        // start keeps the lowest id so that text serialisation can use state 0
        remap[start as usize] = next_id;
        next_id += 1;
        for i in 0..n {
            if keep[i] && i != start as usize {
                remap[i] = next_id;
                next_id += 1;
            }
        }
        let mut arcs = vec![Vec::new(); next_id as usize];
        let mut finals = vec![None; next_id as usize];
        for i in 0..n {
            if !keep[i] {
                continue;
            }
            let ni = remap[i] as usize;
            finals[ni] = self.finals[i];
            arcs[ni] = self.arcs[i]
                .iter()
                .filter(|a| keep[a.next as usize])
                .map(|a| Arc {
                    next: remap[a.next as usize],
                    ..*a
                })
                .collect();
        }
        self.arcs = arcs;
        self.finals = finals;
        self.start = Some(0);
    }

    /// Sorts every state's arcs by input label (stable).
    pub fn arc_sort_input(&mut self) {
        for arcs in &mut self.arcs {
            arcs.sort_by_key(|a| a.ilabel);
        }
    }

    /// Replaces the given input labels with epsilon.
    pub fn remove_input_labels(&mut self, labels: &[Label]) {
        for arcs in &mut self.arcs {
            for a in arcs.iter_mut() {
                if labels.contains(&a.ilabel) {
                    a.ilabel = EPS;
                }
            }
        }
    }

    /// Linear acceptor over `labels` in `table`.
    pub fn linear_acceptor(semiring: Semiring, table: &SymbolTable, labels: &[Label]) -> Fst {
        let mut f = Fst::new(semiring, table.clone(), table.clone());
        let mut s = f.add_state();
        f.set_start(s);
        for &l in labels {
            let n = f.add_state();
            f.add_arc(s, Arc::new(l, l, 0.0, n));
            s = n;
        }
        f.set_final(s, 0.0);
        f
    }

    /// Serialises to the tab-separated text format: arcs as
    /// `src dst isym osym weight`, then finals as `state weight`.
    /// The start state must be 0.
    pub fn to_text(&self) -> Result<String, WfstError> {
        if self.num_states() > 0 && self.start != Some(0) {
            return Err(WfstError::Structure(
                "text format requires start state 0".into(),
            ));
        }
        let mut out = String::new();
        for s in self.states() {
            for a in self.arcs(s) {
                let isym = self
                    .isyms
                    .symbol(a.ilabel)
                    .ok_or_else(|| WfstError::Structure(format!("no input symbol {}", a.ilabel)))?;
                let osym = self
                    .osyms
                    .symbol(a.olabel)
                    .ok_or_else(|| WfstError::Structure(format!("no output symbol {}", a.olabel)))?;
                writeln!(out, "{s}\t{}\t{isym}\t{osym}\t{}", a.next, a.weight).unwrap();
            }
        }
        for s in self.states() {
            if let Some(w) = self.finals[s as usize] {
                writeln!(out, "{s}\t{w}").unwrap();
            }
        }
        Ok(out)
    }

    /// Parses the text format. Symbols missing from the supplied tables are
    /// appended to them in order of appearance.
    pub fn from_text(
        text: &str,
        semiring: Semiring,
        mut isyms: SymbolTable,
        mut osyms: SymbolTable,
    ) -> Result<Fst, WfstError> {
        enum Line {
            Arc(StateId, Arc),
            Final(StateId, f64),
        }
        let parse_state = |s: &str, n: usize| {
            s.parse::<StateId>()
                .map_err(|_| WfstError::Parse(format!("line {n}: bad state {s:?}")))
        };
        let parse_weight = |s: &str, n: usize| {
            s.parse::<f64>()
                .map_err(|_| WfstError::Parse(format!("line {n}: bad weight {s:?}")))
        };
        let mut lines = Vec::new();
        let mut max_state: Option<StateId> = None;
        for (n, raw) in text.lines().enumerate() {
            let n = n + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            let line = match fields.len() {
                1 => Line::Final(parse_state(fields[0], n)?, 0.0),
                2 => Line::Final(parse_state(fields[0], n)?, parse_weight(fields[1], n)?),
                4 | 5 => {
                    let src = parse_state(fields[0], n)?;
                    let dst = parse_state(fields[1], n)?;
                    let weight = if fields.len() == 5 {
                        parse_weight(fields[4], n)?
                    } else {
                        0.0
                    };
                    let il = isyms.add(fields[2]);
                    let ol = osyms.add(fields[3]);
                    max_state = max_state.max(Some(dst));
                    Line::Arc(src, Arc::new(il, ol, weight, dst))
                }
                k => {
                    return Err(WfstError::Parse(format!(
                        "line {n}: expected 1, 2, 4 or 5 fields, found {k}"
                    )))
                }
            };
            let s = match &line {
                Line::Arc(s, _) | Line::Final(s, _) => *s,
            };
            max_state = max_state.max(Some(s));
            lines.push(line);
        }
        let mut fst = Fst::new(semiring, isyms, osyms);
        if let Some(m) = max_state {
            for _ in 0..=m {
                fst.add_state();
            }
            fst.set_start(0);
        }
        for line in lines {
            match line {
                Line::Arc(s, a) => fst.add_arc(s, a),
                Line::Final(s, w) => fst.set_final(s, w),
            }
        }
        Ok(fst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Fst {
        let mut f = Fst::new(
            Semiring::Tropical,
            SymbolTable::from_symbols(["a", "b"]),
            SymbolTable::from_symbols(["x", "y"]),
        );
        let s0 = f.add_state();
        let s1 = f.add_state();
        let s2 = f.add_state();
        f.set_start(s0);
        f.add_arc(s0, Arc::new(1, 1, 0.5, s1));
        f.add_arc(s1, Arc::new(2, 2, 0.25, s2));
        f.add_arc(s1, Arc::new(EPS, 1, 1.0, s1));
        f.set_final(s2, 0.1);
        f
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let f = toy();
        let text = f.to_text().unwrap();
        assert_eq!(
            text,
            "0\t1\ta\tx\t0.5\n1\t2\tb\ty\t0.25\n1\t1\t<eps>\tx\t1\n2\t0.1\n"
        );
        let back = Fst::from_text(&text, Semiring::Tropical, SymbolTable::new(), SymbolTable::new())
            .unwrap();
        assert_eq!(back.to_text().unwrap(), text);
    }

    #[test]
    fn parse_errors() {
        let bad = Fst::from_text("0\t1\ta", Semiring::Tropical, SymbolTable::new(), SymbolTable::new());
        assert!(matches!(bad, Err(WfstError::Parse(_))));
        let bad = Fst::from_text("0\tz", Semiring::Tropical, SymbolTable::new(), SymbolTable::new());
        assert!(bad.is_err());
    }

    #[test]
    fn dangling_target_is_structural_error() {
        let mut f = toy();
        f.add_arc(0, Arc::new(1, 1, 0.0, 9));
        assert!(matches!(f.validate(), Err(WfstError::Structure(_))));
        assert!(toy().validate().is_ok());
    }

    #[test]
    fn connect_trims_dead_states() {
        let mut f = toy();
        let dead = f.add_state();
        f.add_arc(0, Arc::new(1, 1, 0.0, dead));
        let unreachable = f.add_state();
        f.set_final(unreachable, 0.0);
        f.connect();
        assert_eq!(f.num_states(), 3);
        assert_eq!(f.start(), Some(0));
        assert!(!f.is_empty());
    }

    #[test]
    fn log_plus() {
        let s = Semiring::Log;
        let w = s.plus(-(0.25f64.ln()), -(0.5f64.ln()));
        assert!((w - -(0.75f64.ln())).abs() < 1e-12);
        assert_eq!(Semiring::Tropical.plus(1.0, 2.0), 1.0);
        assert_eq!(s.plus(f64::INFINITY, 2.0), 2.0);
    }
}
