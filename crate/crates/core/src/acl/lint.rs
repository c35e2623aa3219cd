use serde::Serialize;

use super::AclStack;

/// `shadowed` can never be the first match because `by` comes earlier and
/// matches every frame `shadowed` would.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ShadowWarning {
    pub shadowed: u32,
    pub by: u32,
}

impl std::fmt::Display for ShadowWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "rule {} is shadowed by rule {} and can never match", self.shadowed, self.by)
    }
}

/// Reports every (earlier, later) rule pair where the earlier rule covers
/// the later one field by field. The check is sound but not complete: a
/// rule shadowed only by the union of several earlier rules goes unreported.
pub fn lint_specific_before_general(stack: &AclStack) -> Vec<ShadowWarning> {
    let rules = stack.rules();
    let mut out = Vec::new();
    for (j, later) in rules.iter().enumerate() {
        for earlier in &rules[..j] {
            if earlier.covers(later) {
                out.push(ShadowWarning { shadowed: later.seq(), by: earlier.seq() });
            }
        }
    }
    out
}
