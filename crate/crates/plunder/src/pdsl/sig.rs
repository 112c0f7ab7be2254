use std::fmt;
use std::sync::Arc;

use smallvec::SmallVec;

use super::dim::Dimension;
use super::error::PdslError;

/// Index into an environment's finite action set.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct ActionLabel(pub usize);

impl ActionLabel {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, finite set of action names. The order is significant: it fixes
/// label indices, tie-breaking, and the canonical rule order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionSet {
    names: Vec<String>,
}

impl ActionSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, PdslError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(PdslError::EmptyActionSet);
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(PdslError::DuplicateAction { name: n.clone() });
            }
        }
        Ok(ActionSet { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn label(&self, name: &str) -> Result<ActionLabel, PdslError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(ActionLabel)
            .ok_or_else(|| PdslError::UnknownAction { name: name.to_string() })
    }

    pub fn name(&self, label: ActionLabel) -> &str {
        &self.names[label.0]
    }

    pub fn labels(&self) -> impl Iterator<Item = ActionLabel> + '_ {
        (0..self.names.len()).map(ActionLabel)
    }

    pub fn contains(&self, label: ActionLabel) -> bool {
        label.0 < self.names.len()
    }
}

/// A registered feature-extraction function: fixed argument dimensions, a
/// result dimension, and the evaluation rule.
#[derive(Clone)]
pub struct FuncDef {
    pub name: String,
    pub arg_dims: Vec<Dimension>,
    pub ret_dim: Dimension,
    eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl FuncDef {
    pub fn new(
        name: impl Into<String>,
        arg_dims: Vec<Dimension>,
        ret_dim: Dimension,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FuncDef { name: name.into(), arg_dims, ret_dim, eval: Arc::new(eval) }
    }

    pub fn call(&self, args: &[f64]) -> f64 {
        (self.eval)(args)
    }
}

impl fmt::Debug for FuncDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FuncDef")
            .field("name", &self.name)
            .field("arg_dims", &self.arg_dims)
            .field("ret_dim", &self.ret_dim)
            .finish()
    }
}

/// Ordered registry of the functions a signature exposes to features.
#[derive(Clone, Debug, Default)]
pub struct FunctionRegistry {
    funcs: Vec<FuncDef>,
}

impl FunctionRegistry {
    pub fn new(funcs: Vec<FuncDef>) -> Self {
        FunctionRegistry { funcs }
    }

    pub fn get(&self, name: &str) -> Option<&FuncDef> {
        self.funcs.iter().find(|f| f.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FuncDef> {
        self.funcs.iter()
    }
}

/// The typing context a policy is defined over: state variables with their
/// dimensions, the action set, and the function registry.
#[derive(Clone, Debug)]
pub struct Signature {
    vars: Vec<(String, Dimension)>,
    pub actions: ActionSet,
    pub funcs: FunctionRegistry,
}

impl Signature {
    pub fn new(
        vars: Vec<(String, Dimension)>,
        actions: ActionSet,
        funcs: FunctionRegistry,
    ) -> Arc<Self> {
        Arc::new(Signature { vars, actions, funcs })
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|(n, _)| n == name)
    }

    pub fn var_dim(&self, name: &str) -> Option<Dimension> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, d)| *d)
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, Dimension)> {
        self.vars.iter().map(|(n, d)| (n.as_str(), *d))
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }
}

/// A point in the state space: one value per signature variable.
#[derive(Clone, Debug)]
pub struct State {
    values: SmallVec<[f64; 8]>,
    sig: Arc<Signature>,
}

impl State {
    pub fn new(sig: Arc<Signature>, values: impl Into<SmallVec<[f64; 8]>>) -> Result<Self, PdslError> {
        let values = values.into();
        if values.len() != sig.num_vars() {
            return Err(PdslError::StateArity { got: values.len(), expected: sig.num_vars() });
        }
        Ok(State { values, sig })
    }

    pub fn signature(&self) -> &Arc<Signature> {
        &self.sig
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.sig.var_index(name).map(|i| self.values[i])
    }

    pub fn get_index(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn set_index(&mut self, index: usize, value: f64) {
        self.values[index] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_set_rejects_duplicates_and_empty() {
        assert!(matches!(
            ActionSet::new(["ACC", "ACC"]),
            Err(PdslError::DuplicateAction { .. })
        ));
        assert!(matches!(ActionSet::new(Vec::<String>::new()), Err(PdslError::EmptyActionSet)));
    }

    #[test]
    fn labels_round_trip() {
        let a = ActionSet::new(["ACC", "CON", "DEC"]).unwrap();
        let con = a.label("CON").unwrap();
        assert_eq!(con, ActionLabel(1));
        assert_eq!(a.name(con), "CON");
        assert!(a.label("STOP").is_err());
    }

    #[test]
    fn state_checks_arity() {
        let sig = Signature::new(
            vec![("v".into(), Dimension::VELOCITY)],
            ActionSet::new(["A"]).unwrap(),
            FunctionRegistry::default(),
        );
        assert!(State::new(sig.clone(), vec![1.0, 2.0]).is_err());
        let s = State::new(sig, vec![3.5]).unwrap();
        assert_eq!(s.get("v"), Some(3.5));
        assert_eq!(s.get("w"), None);
    }
}
