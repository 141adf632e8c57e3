use std::collections::{HashMap, HashSet};

use super::{Gradients, ParamId, ParamStore, Tape, Var};
use crate::error::Result;

/// A tape plus a parameter binder for one forward/backward pass.
///
/// Each parameter is recorded on the tape at most once per session, so a
/// parameter used in several places receives the sum of its gradients. When a
/// trainable set is given, parameters outside it enter as constants.
pub struct Session<'s> {
    pub tape: Tape,
    store: &'s ParamStore,
    bound: HashMap<ParamId, Var>,
    trainable: Option<HashSet<ParamId>>,
}

impl<'s> Session<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Session {
            tape: Tape::new(),
            store,
            bound: HashMap::new(),
            trainable: None,
        }
    }

    /// A session in which only `trainable` parameters track gradients.
    pub fn with_trainable(store: &'s ParamStore, trainable: &[ParamId]) -> Self {
        Session {
            trainable: Some(trainable.iter().copied().collect()),
            ..Session::new(store)
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let frozen = self.trainable.as_ref().is_some_and(|t| !t.contains(&id));
        let v = if frozen {
            self.tape.frozen(self.store, id)
        } else {
            self.tape.param(self.store, id)
        };
        self.bound.insert(id, v);
        v
    }

    /// Runs the backward pass, returning the tape and its gradients for
    /// [`ParamStore::accumulate`].
    pub fn backward(mut self, loss: Var) -> Result<(Tape, Gradients)> {
        let grads = self.tape.backward(loss)?;
        Ok((self.tape, grads))
    }
}
